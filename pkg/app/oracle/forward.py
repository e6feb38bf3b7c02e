# app/oracle/forward.py
"""Exact steady-state evaluation of a tree gas network.

Flows follow from conservation (leaves to root), pressures from the Weymouth
equation (root to leaves). Used as an independent check of the conic solves.
"""

import logging
import math
from collections.abc import Mapping

import networkx as nx
import numpy as np

from app.errors import CaseTopologyError, OracleError, PressureInfeasibleError
from app.model.network import CoupledCase, GasNetwork
from app.ogf.gas_model import GAS_BLOCKS, GasState

logger = logging.getLogger(__name__)

FLOW_TOL = 1e-9


def _per_node(gas: GasNetwork, values, what: str) -> np.ndarray:
    if values is None:
        return np.zeros(len(gas.nodes))
    if isinstance(values, Mapping):
        out = np.zeros(len(gas.nodes))
        for node, v in values.items():
            if node not in gas.node_index:
                raise OracleError(f"{what} given for unknown node '{node}'")
            out[gas.node_index[node]] += float(v)
        return out
    out = np.asarray(values, dtype=float)
    if out.shape != (len(gas.nodes),):
        raise OracleError(f"{what} must have one entry per node ({len(gas.nodes)}), got {out.shape}")
    return out


def _tree(gas: GasNetwork) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(n.id for n in gas.nodes)
    for k, p in enumerate(gas.pipelines):
        g.add_edge(p.from_node, p.to_node, kind="pipe", index=k)
    for k, c in enumerate(gas.compressors):
        g.add_edge(c.from_node, c.to_node, kind="compressor", index=k)
    if g.number_of_edges() != len(gas.pipelines) + len(gas.compressors) or not nx.is_tree(g):
        raise CaseTopologyError(["gas network is not a tree"])
    return g


def _compressor_inflow(gas: GasNetwork, k: int, y_out: float) -> float:
    comp = gas.compressors[k]
    if comp.drive == "electric":
        return y_out
    if gas.fuel_model == "consistent":
        return y_out / (1.0 - comp.alpha)
    return (1.0 - comp.alpha) * y_out


def _compressor_outflow(gas: GasNetwork, k: int, y_in: float) -> float:
    comp = gas.compressors[k]
    if comp.drive == "electric":
        return y_in
    if gas.fuel_model == "consistent":
        return (1.0 - comp.alpha) * y_in
    return y_in / (1.0 - comp.alpha)


def gas_forward_solve(
    gas: GasNetwork,
    withdrawals,
    root_node: str,
    root_pressure: float,
    supplies=None,
    boosts: Mapping[str, float] | None = None,
    compress_to_bounds: bool = False,
) -> GasState:
    """Single-period steady state of a tree gas network.

    Args:
        gas: network (must be a tree once orientation is ignored).
        withdrawals: net withdrawal per node (mapping node id -> value or array in node order).
        root_node: node whose pressure is imposed.
        root_pressure: pressure at ``root_node`` (per unit).
        supplies: retailer injections in retailer order. When omitted the root's
            first retailer balances the network.
        boosts: compression ratio per compressor id (1 when absent).
        compress_to_bounds: boost each compressor as far as ratio and the
            outlet's upper pressure bound allow (overrides ``boosts``).

    Returns:
        GasState with one period; y_in == y_out on every pipeline.
    """
    if root_node not in gas.node_index:
        raise OracleError(f"unknown root node '{root_node}'")
    tree = _tree(gas)
    idx = gas.node_index
    demand = _per_node(gas, withdrawals, "withdrawals")

    y_w = np.zeros(len(gas.retailers))
    if supplies is not None:
        y_w = np.asarray(supplies, dtype=float).copy()
        if y_w.shape != (len(gas.retailers),):
            raise OracleError(f"supplies must have one entry per retailer ({len(gas.retailers)})")
    net = demand.copy()
    for k, w in enumerate(gas.retailers):
        net[idx[w.node]] -= y_w[k]

    # leaves to root: flow on every edge from subtree net demand
    y_pipe = np.zeros(len(gas.pipelines))
    yc_in = np.zeros(len(gas.compressors))
    yc_out = np.zeros(len(gas.compressors))
    parents = dict(nx.bfs_predecessors(tree, root_node))
    subtree = {}
    for node in nx.dfs_postorder_nodes(tree, root_node):
        total = net[idx[node]]
        for child in tree.neighbors(node):
            if parents.get(child) == node:
                total += _edge_draw(gas, tree, node, child, subtree[child], y_pipe, yc_in, yc_out)
        subtree[node] = total

    if supplies is None:
        at_root = gas.retailers_at.get(root_node, [])
        if not at_root:
            raise OracleError(f"root node '{root_node}' has no retailer to balance the network")
        y_w[at_root[0]] += subtree[root_node]
    elif abs(subtree[root_node]) > 1e-6:
        raise OracleError(f"supplies leave an imbalance of {subtree[root_node]:.3e} at the root")

    # root to leaves: pressures
    boosts = dict(boosts or {})
    u = np.zeros(len(gas.nodes))
    u[idx[root_node]] = root_pressure
    for parent, child in nx.bfs_edges(tree, root_node):
        data = tree.edges[parent, child]
        k, up = data["index"], u[idx[parent]]
        if data["kind"] == "pipe":
            pipe = gas.pipelines[k]
            drop = y_pipe[k] ** 2 / pipe.phi
            if pipe.from_node == parent:
                radicand = up ** 2 - drop
                if radicand < 0:
                    raise PressureInfeasibleError(
                        f"pipeline {pipe.id}: flow {y_pipe[k]:.4g} needs more than {up:.4g} at {parent}"
                    )
                u[idx[child]] = math.sqrt(radicand)
            else:
                u[idx[child]] = math.sqrt(up ** 2 + drop)
        else:
            comp = gas.compressors[k]
            if compress_to_bounds:
                ratio = 1.0
                if comp.from_node == parent:
                    ratio = max(1.0, min(comp.ratio, gas.nodes[idx[child]].tau_max / up)) if up > 0 else 1.0
            else:
                ratio = boosts.get(comp.id, 1.0)
            if not 0 < ratio <= comp.ratio:
                raise OracleError(f"compressor {comp.id}: ratio {ratio} outside (0, {comp.ratio}]")
            u[idx[child]] = up * ratio if comp.from_node == parent else up / ratio

    y = y_pipe.reshape(1, -1)
    head = np.array([u[idx[p.from_node]] for p in gas.pipelines])
    tail = np.array([u[idx[p.to_node]] for p in gas.pipelines])
    k_pack = np.array([p.linepack_k for p in gas.pipelines])
    return GasState(
        y_w=y_w.reshape(1, -1),
        y_in=y.copy(),
        y_out=y.copy(),
        yc_in=yc_in.reshape(1, -1),
        yc_out=yc_out.reshape(1, -1),
        u=u.reshape(1, -1),
        m=(k_pack * (head + tail) / 2.0).reshape(1, -1),
    )


def _edge_draw(gas, tree, node, child, child_demand, y_pipe, yc_in, yc_out) -> float:
    """Gas taken out of ``node`` by the edge to ``child``; records the edge flows."""
    data = tree.edges[node, child]
    k = data["index"]
    if data["kind"] == "pipe":
        pipe = gas.pipelines[k]
        flow = child_demand if pipe.from_node == node else -child_demand
        if flow < -FLOW_TOL:
            raise OracleError(f"pipeline {pipe.id} would carry reverse flow ({flow:.3e})")
        y_pipe[k] = max(flow, 0.0)
        return y_pipe[k] if pipe.from_node == node else -y_pipe[k]

    comp = gas.compressors[k]
    if comp.from_node == node:
        if child_demand < -FLOW_TOL:
            raise OracleError(f"compressor {comp.id} would carry reverse flow ({child_demand:.3e})")
        yc_out[k] = max(child_demand, 0.0)
        yc_in[k] = _compressor_inflow(gas, k, yc_out[k])
        return yc_in[k]
    if child_demand > FLOW_TOL:
        raise OracleError(f"compressor {comp.id} would carry reverse flow ({-child_demand:.3e})")
    yc_in[k] = max(-child_demand, 0.0)
    yc_out[k] = _compressor_outflow(gas, k, yc_in[k])
    return -yc_out[k]


# ==============================
# Steady-state screen
# ==============================
def merit_order_supplies(case: CoupledCase, total: float, t: int) -> np.ndarray:
    """Fill ``total`` from retailers in ascending price order, starting from their minimums."""
    retailers = case.gas.retailers
    y = np.array([w.y_min for w in retailers], dtype=float)
    remaining = total - y.sum()
    for k in np.argsort(case.retailer_prices[t], kind="stable"):
        if remaining <= 0:
            break
        take = min(retailers[k].y_max - y[k], remaining)
        y[k] += take
        remaining -= take
    if remaining > 1e-9:
        raise OracleError(f"period {t}: retailers cannot cover {total:.4g} (short by {remaining:.3e})")
    return y


def _with_full_offtake(case: CoupledCase, gas_load: np.ndarray) -> np.ndarray:
    """Per-node withdrawals: ``gas_load`` plus every gas-fired DG burning at P_max."""
    withdrawals = np.array(gas_load, dtype=float)
    for gen in case.power.gas_generators:
        node = case.coupling.gas_generator_nodes[gen.id]
        withdrawals[case.gas.node_index[node]] += gen.p_max / gen.beta
    return withdrawals


def _screen_root(case: CoupledCase) -> tuple[str, float]:
    gas = case.gas
    if not gas.retailers:
        raise OracleError("gas network has no retailers")
    root = gas.retailers[0].node
    return root, gas.nodes[gas.node_index[root]].tau_max


def screen_gas_network(case: CoupledCase) -> GasState:
    """Per-period steady screen: loads plus DG offtake at full output, merit-order supply,
    first retailer node held at its upper pressure bound."""
    gas = case.gas
    root, root_pressure = _screen_root(case)

    periods = []
    for t in range(case.periods):
        withdrawals = _with_full_offtake(case, case.gas_demand[t])
        # compressor fuel is added by the forward solve
        first = gas_forward_solve(gas, withdrawals, root, root_pressure, compress_to_bounds=True)
        supplies = merit_order_supplies(case, float(first.y_w.sum()), t)
        periods.append(gas_forward_solve(gas, withdrawals, root, root_pressure, supplies, compress_to_bounds=True))

    logger.info(f"📊 Steady screen done for {case.periods} periods from root {root}")
    return GasState(**{
        name: np.vstack([getattr(p, name) for p in periods])
        for name in GAS_BLOCKS
    })


def steady_linepack(case: CoupledCase) -> np.ndarray:
    """Per-pipeline linepack of the steady state at peak withdrawal.

    Every node draws its largest gas load over the horizon plus full-output DG
    fuel, and the first retailer feeds the whole network from its upper
    pressure bound.
    """
    root, root_pressure = _screen_root(case)
    peak = _with_full_offtake(case, case.gas_demand.max(axis=0))
    state = gas_forward_solve(case.gas, peak, root, root_pressure, compress_to_bounds=True)
    low = [n.id for i, n in enumerate(case.gas.nodes) if state.u[0, i] < n.tau_min - 1e-9]
    if low:
        logger.warning(f"⚠️ Peak steady state of '{case.name}' runs below the pressure floor at {low}")
    return state.m[0]
