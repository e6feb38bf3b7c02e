# app/model/topology.py
import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from app.model.network import DRIVE_TYPES, FUEL_MODELS, INITIAL_LINEPACK_RULES, TERMINAL_RULES, CoupledCase

logger = logging.getLogger(__name__)


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return bool(self.issues)

    def __len__(self) -> int:
        return len(self.issues)


def power_graph(case: CoupledCase) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(b.id for b in case.power.buses)
    for line in case.power.lines:
        g.add_edge(line.from_bus, line.to_bus, id=line.id)
    return g


def gas_graph(case: CoupledCase) -> nx.DiGraph:
    """Directed gas graph; edges carry ``kind`` ('pipe' / 'compressor') and ``index``."""
    g = nx.DiGraph()
    g.add_nodes_from(n.id for n in case.gas.nodes)
    for k, pipe in enumerate(case.gas.pipelines):
        g.add_edge(pipe.from_node, pipe.to_node, id=pipe.id, kind="pipe", index=k)
    for k, comp in enumerate(case.gas.compressors):
        g.add_edge(comp.from_node, comp.to_node, id=comp.id, kind="compressor", index=k)
    return g


def validate_topology(case: CoupledCase) -> ValidationReport:
    """Collect every violated structural invariant of ``case``.

    Violations are report entries, never exceptions.
    """
    report = ValidationReport()
    _check_power(case, report)
    _check_gas(case, report)
    _check_coupling(case, report)
    _check_horizon(case, report)

    for w in report.warnings:
        logger.warning(f"⚠️ {case.name}: {w}")
    return report


# ───────────────────────────────
# Power side
# ───────────────────────────────
def _check_power(case: CoupledCase, report: ValidationReport) -> None:
    net = case.power
    buses = {b.id for b in net.buses}
    issues = report.issues

    if len(buses) != len(net.buses):
        issues.append("power: duplicate bus id")
    if net.reference_bus not in buses:
        issues.append(f"power: reference bus '{net.reference_bus}' does not exist")

    dangling = False
    for line in net.lines:
        for end in (line.from_bus, line.to_bus):
            if end not in buses:
                issues.append(f"power: line '{line.id}' references unknown bus '{end}'")
                dangling = True
        if line.r < 0 or line.x < 0:
            issues.append(f"power: line '{line.id}' has negative impedance")
        if line.i_max_sq <= 0:
            issues.append(f"power: line '{line.id}' has nonpositive current limit")

    if not dangling and buses:
        sources = [net.reference_bus] if net.reference_bus in buses else []
        edges = [(line.from_bus, line.to_bus) for line in net.lines]
        _check_tree("power", power_graph(case), edges, sources, issues)

    for bus in net.buses:
        if not 0 < bus.v_min < bus.v_max:
            issues.append(f"power: bound ordering violated for bus '{bus.id}' (v_min={bus.v_min}, v_max={bus.v_max})")

    for dev in (*net.generators, *net.gas_generators):
        if dev.bus not in buses:
            issues.append(f"power: device '{dev.id}' references unknown bus '{dev.bus}'")
        if dev.p_min > dev.p_max:
            issues.append(f"power: bound ordering violated for '{dev.id}' (P_min > P_max)")
        if dev.q_min > dev.q_max:
            issues.append(f"power: bound ordering violated for '{dev.id}' (Q_min > Q_max)")
    for gen in net.generators:
        if gen.a < 0:
            issues.append(f"power: generator '{gen.id}' has a concave cost (a < 0)")
    for gen in net.gas_generators:
        if gen.beta <= 0:
            issues.append(f"power: gas-fired DG '{gen.id}' has nonpositive conversion factor")
    for load in net.loads:
        if load.bus not in buses:
            issues.append(f"power: load '{load.id}' references unknown bus '{load.bus}'")


# ───────────────────────────────
# Gas side
# ───────────────────────────────
def _check_gas(case: CoupledCase, report: ValidationReport) -> None:
    net = case.gas
    nodes = {n.id for n in net.nodes}
    issues = report.issues

    if len(nodes) != len(net.nodes):
        issues.append("gas: duplicate node id")
    if net.fuel_model not in FUEL_MODELS:
        issues.append(f"gas: unknown fuel model '{net.fuel_model}'")

    dangling = False
    for edge in (*net.pipelines, *net.compressors):
        for end in (edge.from_node, edge.to_node):
            if end not in nodes:
                issues.append(f"gas: '{edge.id}' references unknown node '{end}'")
                dangling = True

    if not dangling and nodes:
        roots = sorted({w.node for w in net.retailers if w.node in nodes})
        edges = [(e.from_node, e.to_node) for e in (*net.pipelines, *net.compressors)]
        _check_tree("gas", gas_graph(case), edges, roots, issues)

    for node in net.nodes:
        if not 0 < node.tau_min < node.tau_max:
            issues.append(f"gas: bound ordering violated for node '{node.id}' (tau_l={node.tau_min}, tau_u={node.tau_max})")
    for pipe in net.pipelines:
        if not (pipe.phi > 0 and pipe.linepack_k > 0):
            issues.append(f"gas: pipeline '{pipe.id}' has nonpositive coefficients")
        if pipe.initial_linepack < 0:
            issues.append(f"gas: pipeline '{pipe.id}' has negative initial linepack")
    for comp in net.compressors:
        if comp.ratio < 1:
            issues.append(f"gas: compressor '{comp.id}' has compression ratio < 1")
        if not 0 <= comp.alpha < 1:
            issues.append(f"gas: compressor '{comp.id}' has consumption coefficient outside [0, 1)")
        if comp.y_max < 0:
            issues.append(f"gas: compressor '{comp.id}' has negative flow cap")
        if comp.drive not in DRIVE_TYPES:
            issues.append(f"gas: compressor '{comp.id}' has unknown drive '{comp.drive}'")
        elif comp.drive == "gas" and net.fuel_model == "inflow_scaled" and comp.alpha > 0:
            report.warnings.append(
                f"compressor '{comp.id}' is gas-driven under the inflow-scaled fuel relation "
                f"(outflow exceeds inflow); set gas.fuel_model='consistent' for y_out=(1-alpha)*y_in"
            )
    for w in net.retailers:
        if w.node not in nodes:
            issues.append(f"gas: retailer '{w.id}' references unknown node '{w.node}'")
        if w.y_min > w.y_max:
            issues.append(f"gas: bound ordering violated for retailer '{w.id}'")
    for load in net.loads:
        if load.node not in nodes:
            issues.append(f"gas: load '{load.id}' references unknown node '{load.node}'")


def _check_tree(side: str, g: nx.DiGraph, edges: list[tuple[str, str]], sources: list[str], issues: list[str]) -> None:
    n = g.number_of_nodes()
    ug = nx.MultiGraph()
    ug.add_nodes_from(g.nodes)
    ug.add_edges_from(edges)

    if not nx.is_connected(ug):
        issues.append(f"{side}: network is disconnected")
    if len(edges) >= n or not nx.is_forest(ug):
        issues.append(f"{side}: cycle detected ({len(edges)} branches for {n} nodes)")

    if side == "power":
        for node in g.nodes:
            if node in sources:
                if g.in_degree(node) != 0:
                    issues.append(f"power: orientation toward reference bus '{node}'")
            elif g.in_degree(node) != 1:
                issues.append(f"power: bus '{node}' must have exactly one incoming line (orientation away from reference)")
        return

    if not sources:
        issues.append("gas: no retailer node to feed the network")
        return
    reachable = set(sources)
    for s in sources:
        reachable |= nx.descendants(g, s)
    stranded = sorted(set(g.nodes) - reachable)
    if stranded:
        issues.append(f"gas: orientation leaves nodes without a path from a retailer: {', '.join(stranded)}")



# ───────────────────────────────
# Coupling + horizon
# ───────────────────────────────
def _check_coupling(case: CoupledCase, report: ValidationReport) -> None:
    issues = report.issues
    buses = {b.id for b in case.power.buses}
    nodes = {n.id for n in case.gas.nodes}
    gas_gens = {g.id for g in case.power.gas_generators}
    comps = {c.id: c for c in case.gas.compressors}

    for gen_id, node in case.coupling.gas_generator_nodes.items():
        if gen_id not in gas_gens:
            issues.append(f"coupling: unknown gas-fired DG '{gen_id}'")
        if node not in nodes:
            issues.append(f"coupling: gas-fired DG '{gen_id}' references unknown node '{node}'")
    for gen_id in sorted(gas_gens - set(case.coupling.gas_generator_nodes)):
        issues.append(f"coupling: gas-fired DG '{gen_id}' is not coupled to a gas node")

    for comp_id, bus in case.coupling.compressor_buses.items():
        comp = comps.get(comp_id)
        if comp is None:
            issues.append(f"coupling: unknown compressor '{comp_id}'")
            continue
        if comp.drive != "electric":
            issues.append(f"coupling: gas-driven compressor '{comp_id}' must not reference a bus")
        if bus not in buses:
            issues.append(f"coupling: compressor '{comp_id}' references unknown bus '{bus}'")
    for comp in comps.values():
        if comp.drive == "electric" and comp.id not in case.coupling.compressor_buses:
            issues.append(f"coupling: electric compressor '{comp.id}' has no served power bus")


def _check_horizon(case: CoupledCase, report: ValidationReport) -> None:
    h = case.horizon
    issues = report.issues
    if h.periods < 1:
        issues.append("horizon: period count must be positive")
    if h.duration <= 0:
        issues.append("horizon: period duration must be positive")
    if h.terminal_rule not in TERMINAL_RULES:
        issues.append(f"horizon: unknown terminal rule '{h.terminal_rule}'")
    if h.initial_linepack not in INITIAL_LINEPACK_RULES:
        issues.append(f"horizon: unknown initial linepack rule '{h.initial_linepack}'")
    for kind, table in (("shape", h.shapes), ("price", h.prices)):
        for name, values in table.items():
            if len(values) != h.periods:
                issues.append(f"horizon: {kind} profile '{name}' has {len(values)} entries, expected {h.periods}")
            elif kind == "shape" and np.min(values) < 0:
                issues.append(f"horizon: demand profile '{name}' has negative entries")
    for load in (*case.power.loads, *case.gas.loads):
        if load.shape not in h.shapes:
            issues.append(f"horizon: load '{load.id}' references unknown profile '{load.shape}'")
    for load in case.power.loads:
        if load.q_shape and load.q_shape not in h.shapes:
            issues.append(f"horizon: load '{load.id}' references unknown reactive profile '{load.q_shape}'")
    for load in case.power.loads:
        if load.p < 0:
            issues.append(f"horizon: load '{load.id}' has negative demand")
    for load in case.gas.loads:
        if load.flow < 0:
            issues.append(f"horizon: load '{load.id}' has negative demand")
    for w in case.gas.retailers:
        if w.price not in h.prices:
            issues.append(f"horizon: retailer '{w.id}' references unknown price profile '{w.price}'")
