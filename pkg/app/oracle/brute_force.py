# app/oracle/brute_force.py
"""Grid enumeration of tiny coupled instances.

Supported shape: one gas root node holding every retailer, passive pipelines
pointing away from it, and exactly one conventional DG at the reference bus
that balances the power network. The enumerated dimensions are the gas-fired
outputs plus the split between retailers (at most two per period). Each
gas-fired DG's reactive output is sampled on its own axis of
``reactive_points`` levels and searched jointly with every grid point; these
axes do not count as enumerated dimensions. Linepack is treated as
quasi-steady, so periods are enumerated independently; instances should
carry negligible linepack coefficients.
"""

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from app.errors import NoFeasiblePointError, OracleError
from app.model.network import CoupledCase
from app.ogf.gas_model import GAS_BLOCKS, GasState
from app.opf.power_model import PowerState
from app.oracle.forward import gas_forward_solve

logger = logging.getLogger(__name__)

MAX_DIMENSIONS = 2
SWEEP_ITER = 200
SWEEP_TOL = 1e-13
FEAS_TOL = 1e-9


@dataclass
class BruteForceResult:
    objective: float
    power: PowerState
    gas: GasState
    grid_points: int  # per period
    resolution: float


# ───────────────────────────────
# Shape checks / precomputation
# ───────────────────────────────
def _gas_root(case: CoupledCase) -> str:
    gas = case.gas
    if gas.compressors:
        raise OracleError("brute force supports passive pipelines only")
    roots = {w.node for w in gas.retailers}
    if len(roots) != 1:
        raise OracleError(f"brute force needs every retailer on one root node, got {sorted(roots)}")
    return roots.pop()


def _subtree_matrices(case: CoupledCase, root: str) -> tuple[np.ndarray, np.ndarray]:
    """(pipelines, nodes) downstream indicator and (nodes, pipelines) root-path indicator."""
    gas = case.gas
    g = nx.DiGraph()
    g.add_nodes_from(n.id for n in gas.nodes)
    for p in gas.pipelines:
        g.add_edge(p.from_node, p.to_node)
    reach = nx.descendants(g, root) | {root}
    if len(reach) != len(gas.nodes) or not nx.is_tree(g.to_undirected()):
        raise OracleError("brute force needs a gas tree with pipelines pointing away from the root")

    idx = gas.node_index
    down = np.zeros((len(gas.pipelines), len(gas.nodes)))
    path = np.zeros((len(gas.nodes), len(gas.pipelines)))
    for k, p in enumerate(gas.pipelines):
        for node in nx.descendants(g, p.to_node) | {p.to_node}:
            down[k, idx[node]] = 1.0
            path[idx[node], k] = 1.0
    return down, path


def _slack_generator(case: CoupledCase):
    net = case.power
    if len(net.generators) != 1 or net.generators[0].bus != net.reference_bus:
        raise OracleError("brute force needs exactly one conventional DG, located at the reference bus")
    return net.generators[0]


def _axes(case: CoupledCase, resolution: float) -> list[np.ndarray]:
    axes = []
    for gen in case.power.gas_generators:
        axes.append(_axis(gen.p_min, gen.p_max, resolution))
    for w in case.gas.retailers[:-1]:
        axes.append(_axis(w.y_min, w.y_max, resolution))
    if len(axes) > MAX_DIMENSIONS:
        raise OracleError(f"brute force enumerates at most {MAX_DIMENSIONS} dimensions, case needs {len(axes)}")
    return axes


def _reactive_grid(case: CoupledCase, points: int) -> np.ndarray:
    """(combinations, gas-fired DGs) reactive outputs; a fixed q is a single level."""
    if points < 1:
        raise OracleError("reactive_points must be at least 1")
    axes = [np.linspace(g.q_min, g.q_max, points) if g.q_max > g.q_min else np.array([g.q_min])
            for g in case.power.gas_generators]
    if not axes:
        return np.zeros((1, 0))
    return np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)


def _axis(lo: float, hi: float, resolution: float) -> np.ndarray:
    if not np.isfinite(hi):
        raise OracleError("brute force needs finite bounds on every enumerated quantity")
    n = int(round((hi - lo) / resolution)) + 1 if hi > lo else 1
    return np.linspace(lo, hi, max(n, 1))


# ───────────────────────────────
# Power side: DistFlow sweep
# ───────────────────────────────
def _sweep_order(case: CoupledCase) -> list[int]:
    net = case.power
    graph = nx.DiGraph()
    graph.add_node(net.reference_bus)
    graph.add_edges_from((line.from_bus, line.to_bus) for line in net.lines)
    order = []
    for _, bus in nx.bfs_edges(graph, net.reference_bus):
        order.extend(net.lines_into[bus])
    if len(order) != len(net.lines):
        raise OracleError("power network is not radial from the reference bus")
    return order


def distflow_sweep(case: CoupledCase, demand_p: np.ndarray, demand_q: np.ndarray):
    """Backward/forward sweep for a batch of operating points.

    ``demand_p``/``demand_q`` are (points, buses) net demands excluding the
    reference DG. Returns pf, qf, current (points, lines), nu (points, buses)
    and the reference DG's active/reactive output (points,).
    """
    net = case.power
    P = demand_p.shape[0]
    L, B = len(net.lines), len(net.buses)
    order = _sweep_order(case)
    bi = net.bus_index
    g_sh = np.array([b.g_shunt for b in net.buses])
    b_sh = np.array([b.b_shunt for b in net.buses])

    nu = np.ones((P, B))
    pf, qf, current = np.zeros((P, L)), np.zeros((P, L)), np.zeros((P, L))
    for _ in range(SWEEP_ITER):
        for k in reversed(order):
            line = net.lines[k]
            j = bi[line.to_bus]
            children = net.lines_out_of[line.to_bus]
            pf[:, k] = line.r * current[:, k] + demand_p[:, j] + g_sh[j] * nu[:, j] + pf[:, children].sum(axis=1)
            qf[:, k] = line.x * current[:, k] + demand_q[:, j] + b_sh[j] * nu[:, j] + qf[:, children].sum(axis=1)
        previous = nu.copy()
        for k in order:
            line = net.lines[k]
            i, j = bi[line.from_bus], bi[line.to_bus]
            current[:, k] = (pf[:, k] ** 2 + qf[:, k] ** 2) / nu[:, i]
            nu[:, j] = nu[:, i] - 2.0 * (line.r * pf[:, k] + line.x * qf[:, k]) + (line.r ** 2 + line.x ** 2) * current[:, k]
        if np.max(np.abs(nu - previous), initial=0.0) < SWEEP_TOL:
            break

    ref = bi[net.reference_bus]
    out = net.lines_out_of[net.reference_bus]
    p_ref = demand_p[:, ref] + g_sh[ref] * nu[:, ref] + pf[:, out].sum(axis=1)
    q_ref = demand_q[:, ref] + b_sh[ref] * nu[:, ref] + qf[:, out].sum(axis=1)
    return pf, qf, current, nu, p_ref, q_ref


# ───────────────────────────────
# Public API
# ───────────────────────────────
def brute_force_optimum(
    case: CoupledCase,
    resolution: float = 1e-3,
    max_points: int = 2_000_000,
    reactive_points: int = 41,
) -> BruteForceResult:
    """Best grid point per period; ties go to the first point in grid order."""
    if resolution <= 0:
        raise OracleError("grid resolution must be positive")
    root = _gas_root(case)
    down, path = _subtree_matrices(case, root)
    slack = _slack_generator(case)

    net, gas = case.power, case.gas
    axes = _axes(case, resolution)
    active = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1) if axes else np.zeros((1, 0))
    reactive = _reactive_grid(case, reactive_points)
    P = active.shape[0] * reactive.shape[0]
    if P > max_points:
        raise OracleError(f"grid has {P} points, above the limit of {max_points}")
    logger.info(
        f"🚀 Brute force on '{case.name}': {P} grid points per period "
        f"({reactive.shape[0]} reactive levels), resolution {resolution}"
    )

    # every active point paired with every reactive combination
    grid = np.repeat(active, reactive.shape[0], axis=0)
    G = len(net.gas_generators)
    p_n = grid[:, :G]
    q_n = np.tile(reactive, (active.shape[0], 1))
    beta = np.array([g.beta for g in net.gas_generators])
    gen_bus = [net.bus_index[g.bus] for g in net.gas_generators]
    fuel_node = [gas.node_index[case.coupling.gas_generator_nodes[g.id]] for g in net.gas_generators]
    phi = np.array([p.phi for p in gas.pipelines])
    tau_lo = np.array([n.tau_min ** 2 for n in gas.nodes])
    tau_hi = np.array([n.tau_max ** 2 for n in gas.nodes])
    v_lo = np.array([b.v_min ** 2 for b in net.buses])
    v_hi = np.array([b.v_max ** 2 for b in net.buses])
    i_max = np.array([line.i_max_sq for line in net.lines])
    y_min = np.array([w.y_min for w in gas.retailers])
    y_max = np.array([w.y_max for w in gas.retailers])

    objective = 0.0
    power_rows, gas_rows = [], []
    for t in range(case.periods):
        withdrawals = np.tile(case.gas_demand[t], (P, 1))
        demand_p = np.tile(case.active_demand[t], (P, 1))
        demand_q = np.tile(case.reactive_demand[t], (P, 1))
        for k in range(G):
            withdrawals[:, fuel_node[k]] += p_n[:, k] / beta[k]
            demand_p[:, gen_bus[k]] -= p_n[:, k]
            demand_q[:, gen_bus[k]] -= q_n[:, k]

        y_w = np.zeros((P, len(gas.retailers)))
        y_w[:, :-1] = grid[:, G:]
        y_w[:, -1] = withdrawals.sum(axis=1) - y_w[:, :-1].sum(axis=1)

        flows = withdrawals @ down.T
        drop = (flows ** 2 / phi) @ path.T  # u_root^2 - u_node^2
        r2_lo = np.max(tau_lo + drop, axis=1)
        r2_hi = np.min(tau_hi + drop, axis=1)

        pf, qf, current, nu, p_g, q_g = distflow_sweep(case, demand_p, demand_q)

        feasible = (
            (r2_lo <= r2_hi + FEAS_TOL)
            & np.all((y_w >= y_min - FEAS_TOL) & (y_w <= y_max + FEAS_TOL), axis=1)
            & (p_g >= slack.p_min - FEAS_TOL) & (p_g <= slack.p_max + FEAS_TOL)
            & (q_g >= slack.q_min - FEAS_TOL) & (q_g <= slack.q_max + FEAS_TOL)
            & np.all((nu >= v_lo - FEAS_TOL) & (nu <= v_hi + FEAS_TOL), axis=1)
            & np.all((current <= i_max + FEAS_TOL) & (pf >= -FEAS_TOL), axis=1)
        )
        if not feasible.any():
            raise NoFeasiblePointError(f"period {t}: no feasible grid point")

        cost = slack.a * p_g ** 2 + slack.b * p_g + slack.c + y_w @ case.retailer_prices[t]
        best = int(np.argmin(np.where(feasible, cost, np.inf)))
        objective += float(cost[best])
        logger.debug(f"period {t}: {int(feasible.sum())}/{P} feasible, best cost {cost[best]:.6g}")

        power_rows.append(dict(
            p_g=np.array([p_g[best]]), q_g=np.array([q_g[best]]),
            p_n=p_n[best].copy(), q_n=q_n[best].copy(),
            pf=pf[best], qf=qf[best], nu=nu[best], current=current[best],
        ))
        gas_rows.append(gas_forward_solve(
            gas, withdrawals[best], root, float(np.sqrt(max(r2_hi[best], 0.0))), supplies=y_w[best],
        ))

    power = PowerState(
        **{name: np.vstack([row[name] for row in power_rows]) for name in power_rows[0]},
        compressor_demand=np.zeros((case.periods, 0)),
    )
    gas_state = GasState(**{name: np.vstack([getattr(s, name) for s in gas_rows]) for name in GAS_BLOCKS})
    logger.info(f"✅ Brute force optimum {objective:.6g}")
    return BruteForceResult(objective, power, gas_state, P, resolution)
