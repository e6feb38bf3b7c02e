# app/ogf/gas_model.py
"""Gas-side constraints: supplies, nodal balance, linepack, compressors and the
two convexifications of the Weymouth equation (relaxation / SSA cone)."""

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from app.conic.backend import ConicSolution
from app.conic.expression import AffineExpr
from app.conic.program import ConicProgram, VariableBlock
from app.errors import ProgramError, SubproblemError
from app.model.network import CoupledCase

logger = logging.getLogger(__name__)

GAS_BLOCKS = ("y_w", "y_in", "y_out", "yc_in", "yc_out", "u", "m")
GAS_MODES = ("relaxation", "ssa")


# ==============================
# State
# ==============================
@dataclass
class GasState:
    """Per-period gas-side values; every array is (T, count)."""

    y_w: np.ndarray
    y_in: np.ndarray
    y_out: np.ndarray
    yc_in: np.ndarray
    yc_out: np.ndarray
    u: np.ndarray
    m: np.ndarray
    zeta: np.ndarray | None = None  # pressure-square proxy, relaxation solves only

    @property
    def periods(self) -> int:
        return self.u.shape[0]

    def vector(self) -> np.ndarray:
        """Flatten in the layout used by ``GasVariables`` (and by the coupling matrix B)."""
        return np.concatenate([getattr(self, name).ravel() for name in GAS_BLOCKS])

    def as_blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in GAS_BLOCKS}

    @classmethod
    def zeros(cls, case: CoupledCase) -> "GasState":
        T, g = case.periods, case.gas
        L, C = len(g.pipelines), len(g.compressors)
        return cls(
            y_w=np.zeros((T, len(g.retailers))),
            y_in=np.zeros((T, L)),
            y_out=np.zeros((T, L)),
            yc_in=np.zeros((T, C)),
            yc_out=np.zeros((T, C)),
            u=np.zeros((T, len(g.nodes))),
            m=np.zeros((T, L)),
        )

    def purchase_cost(self, case: CoupledCase) -> float:
        return float(np.sum(case.retailer_prices * self.y_w))

    def weymouth_sides(self, case: CoupledCase) -> tuple[np.ndarray, np.ndarray]:
        """((y_in+y_out)^2/4, phi (u_head^2 - u_tail^2)) per (t, pipeline)."""
        head, tail, phi = pipe_arrays(case)
        s = self.y_in + self.y_out
        return s ** 2 / 4.0, phi * (self.u[:, head] ** 2 - self.u[:, tail] ** 2)

    def weymouth_residual(self, case: CoupledCase) -> np.ndarray:
        """|lhs - rhs| / max(1, rhs), the relative Weymouth residual per (t, pipeline)."""
        lhs, rhs = self.weymouth_sides(case)
        return np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))


def pipe_arrays(case: CoupledCase) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx = case.gas.node_index
    head = np.array([idx[p.from_node] for p in case.gas.pipelines], dtype=int)
    tail = np.array([idx[p.to_node] for p in case.gas.pipelines], dtype=int)
    phi = np.array([p.phi for p in case.gas.pipelines], dtype=float)
    return head, tail, phi


def dg_offtake_from(case: CoupledCase, p_n: np.ndarray) -> np.ndarray:
    """Gas drawn by each gas-fired DG, p_n / beta, (T, gas-fired DGs)."""
    beta = np.array([g.beta for g in case.power.gas_generators], dtype=float)
    return p_n / beta if beta.size else np.zeros((p_n.shape[0], 0))


# ==============================
# Variables
# ==============================
@dataclass(frozen=True)
class GasVariables:
    y_w: VariableBlock
    y_in: VariableBlock
    y_out: VariableBlock
    yc_in: VariableBlock
    yc_out: VariableBlock
    u: VariableBlock
    m: VariableBlock

    @classmethod
    def register(cls, program: ConicProgram, case: CoupledCase) -> "GasVariables":
        T, g = case.periods, case.gas
        L, C = len(g.pipelines), len(g.compressors)
        return cls(
            y_w=program.add_variable_block(
                "y_w", (T, len(g.retailers)),
                np.array([w.y_min for w in g.retailers]), np.array([w.y_max for w in g.retailers]),
            ),
            y_in=program.add_variable_block("y_in", (T, L), 0.0),
            y_out=program.add_variable_block("y_out", (T, L), 0.0),
            yc_in=program.add_variable_block("yc_in", (T, C), 0.0, np.array([c.y_max for c in g.compressors])),
            yc_out=program.add_variable_block("yc_out", (T, C), 0.0),
            u=program.add_variable_block(
                "u", (T, len(g.nodes)),
                np.array([n.tau_min for n in g.nodes]), np.array([n.tau_max for n in g.nodes]),
            ),
            m=program.add_variable_block("m", (T, L), 0.0),
        )

    @classmethod
    def attach(cls, program: ConicProgram) -> "GasVariables":
        return cls(**{name: program.block(name) for name in GAS_BLOCKS})

    @property
    def offset(self) -> int:
        return self.y_w.start

    @property
    def size(self) -> int:
        return sum(getattr(self, f.name).size for f in fields(self))


@dataclass
class GasConstraintHandles:
    variables: GasVariables
    zeta: VariableBlock | None = None
    weymouth_cones: list[int] = field(default_factory=list)  # row-major over (t, pipeline)


# ==============================
# Constraint helpers
# ==============================
def gas_balance_expr(case: CoupledCase, gv: GasVariables, node: str, t: int) -> AffineExpr:
    """Supply - load - branch inflow at heads + branch outflow at tails, at ``node``.

    Gas-fired DG offtake is left to the caller.
    """
    g = case.gas
    e = AffineExpr(constant=-case.gas_demand[t, g.node_index[node]])
    for k in g.retailers_at.get(node, []):
        e.add_term(gv.y_w.index(t, k), 1.0)
    for k in g.pipes_from.get(node, []):
        e.add_term(gv.y_in.index(t, k), -1.0)
    for k in g.pipes_to.get(node, []):
        e.add_term(gv.y_out.index(t, k), 1.0)
    for k in g.compressors_from.get(node, []):
        e.add_term(gv.yc_in.index(t, k), -1.0)
    for k in g.compressors_to.get(node, []):
        e.add_term(gv.yc_out.index(t, k), 1.0)
    return e


def _fuel_relation(case: CoupledCase, gv: GasVariables, k: int, t: int) -> AffineExpr:
    comp = case.gas.compressors[k]
    e = AffineExpr()
    if comp.drive == "electric":
        # gas-conserving; the consumption shows up as electric demand instead
        e.add_term(gv.yc_in.index(t, k), 1.0)
        e.add_term(gv.yc_out.index(t, k), -1.0)
    elif case.gas.fuel_model == "consistent":
        e.add_term(gv.yc_out.index(t, k), 1.0)
        e.add_term(gv.yc_in.index(t, k), -(1.0 - comp.alpha))
    else:
        e.add_term(gv.yc_in.index(t, k), 1.0)
        e.add_term(gv.yc_out.index(t, k), -(1.0 - comp.alpha))
    return e


def build_gas_constraints(
    case: CoupledCase,
    program: ConicProgram,
    mode: str,
    coupled: str = "fixed",
    dg_offtake: np.ndarray | None = None,
    variables: GasVariables | None = None,
) -> GasConstraintHandles:
    """Add the gas-network constraints to ``program``.

    ``mode='relaxation'`` adds the pressure-square variables with their cones;
    ``mode='ssa'`` adds the convex half of the Weymouth split and leaves the
    concave half to per-iteration cuts. ``coupled`` controls the balance rows at
    nodes fuelling gas-fired DGs: 'fixed' uses ``dg_offtake`` (T, gas-fired DGs),
    'external' leaves them to the caller.
    """
    if mode not in GAS_MODES:
        raise ProgramError(f"unknown gas mode '{mode}'")
    T, g = case.periods, case.gas
    gv = variables or GasVariables.register(program, case)
    handles = GasConstraintHandles(gv)

    n_dg = len(case.power.gas_generators)
    if dg_offtake is None:
        dg_offtake = np.zeros((T, n_dg))
    dg_offtake = np.asarray(dg_offtake, dtype=float)
    if dg_offtake.shape != (T, n_dg):
        raise ProgramError(f"DG offtake must be {(T, n_dg)}, got {dg_offtake.shape}")

    coupled_nodes = set(case.coupled_nodes)
    idx = g.node_index

    # --- nodal balance ---
    for t in range(T):
        for node in g.nodes:
            if node.id in coupled_nodes:
                if coupled == "fixed":
                    offtake = sum(dg_offtake[t, k] for k in case.gas_generators_at_node[node.id])
                    program.add_equality(gas_balance_expr(case, gv, node.id, t), offtake, label=f"G[{node.id},{t}]")
            else:
                program.add_equality(gas_balance_expr(case, gv, node.id, t), label=f"G[{node.id},{t}]")

    # --- passive pipelines: linepack, direction ---
    for k, pipe in enumerate(g.pipelines):
        h, e = idx[pipe.from_node], idx[pipe.to_node]
        for t in range(T):
            pack = gv.m.expr(t, k) - (gv.u.expr(t, h) + gv.u.expr(t, e)) * (0.5 * pipe.linepack_k)
            program.add_equality(pack, label=f"M[{pipe.id},{t}]")

            previous = gv.m.expr(t - 1, k) if t > 0 else AffineExpr.const(pipe.initial_linepack)
            program.add_equality(
                gv.m.expr(t, k) - previous - gv.y_in.expr(t, k) + gv.y_out.expr(t, k), label=f"dM[{pipe.id},{t}]"
            )
            program.add_inequality(gv.u.expr(t, e) - gv.u.expr(t, h), label=f"dir[{pipe.id},{t}]")
        if case.horizon.terminal_rule == "equal-to-initial":
            program.add_equality(gv.m.expr(T - 1, k), pipe.initial_linepack, label=f"MT[{pipe.id}]")

    # --- compressors ---
    for k, comp in enumerate(g.compressors):
        h, e = idx[comp.from_node], idx[comp.to_node]
        for t in range(T):
            program.add_inequality(gv.u.expr(t, e) - gv.u.expr(t, h) * comp.ratio, label=f"ratio[{comp.id},{t}]")
            program.add_equality(_fuel_relation(case, gv, k, t), label=f"fuel[{comp.id},{t}]")

    # --- Weymouth convexification ---
    if mode == "relaxation":
        zeta = program.add_variable_block(
            "zeta", (T, len(g.nodes)),
            np.array([n.tau_min ** 2 for n in g.nodes]), np.array([n.tau_max ** 2 for n in g.nodes]),
        )
        handles.zeta = zeta
        one = AffineExpr.const(1.0)
        for t in range(T):
            for k, pipe in enumerate(g.pipelines):
                h, e = idx[pipe.from_node], idx[pipe.to_node]
                half_flow = (gv.y_in.expr(t, k) + gv.y_out.expr(t, k)) * 0.5
                drop = (zeta.expr(t, h) - zeta.expr(t, e)) * pipe.phi
                handles.weymouth_cones.append(program.add_rotated(drop, one, [half_flow], label=f"W[{pipe.id},{t}]"))
            for i in range(len(g.nodes)):
                program.add_rotated(zeta.expr(t, i), one, [gv.u.expr(t, i)], label=f"Z[{g.nodes[i].id},{t}]")
    else:
        for t in range(T):
            for k, pipe in enumerate(g.pipelines):
                h, e = idx[pipe.from_node], idx[pipe.to_node]
                root_phi = math.sqrt(pipe.phi)
                half_flow = (gv.y_in.expr(t, k) + gv.y_out.expr(t, k)) * 0.5
                handles.weymouth_cones.append(program.add_soc(
                    gv.u.expr(t, h) * root_phi, [half_flow, gv.u.expr(t, e) * root_phi], label=f"W[{pipe.id},{t}]",
                ))
    return handles


def add_purchase_cost(program: ConicProgram, case: CoupledCase, gv: GasVariables) -> None:
    prices = case.retailer_prices
    for t in range(case.periods):
        for k in range(len(case.gas.retailers)):
            program.add_linear_objective(gv.y_w.expr(t, k, coef=prices[t, k]))


def extract_gas_state(program: ConicProgram, solution: ConicSolution, stage: str = "ogf") -> GasState:
    if not solution.optimal:
        raise SubproblemError(stage, solution.status.value)
    gv = GasVariables.attach(program)
    values = {name: getattr(gv, name).values(solution.x) for name in GAS_BLOCKS}
    zeta = program.blocks.get("zeta")
    return GasState(**values, zeta=zeta.values(solution.x) if zeta is not None else None)
