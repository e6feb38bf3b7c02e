# app/opf/power_model.py
"""Branch-flow SOCP for the radial power distribution network."""

import logging
from dataclasses import dataclass, fields

import numpy as np

from app.conic.backend import ConicSolution
from app.conic.expression import AffineExpr
from app.conic.program import ConicProgram, VariableBlock
from app.errors import ProgramError, SubproblemError
from app.model.network import CoupledCase

logger = logging.getLogger(__name__)

POWER_BLOCKS = ("p_g", "q_g", "p_n", "q_n", "pf", "qf", "nu", "current")
BOUND_TOL = 1e-6


# ==============================
# State
# ==============================
@dataclass
class PowerState:
    """Per-period power-side values; every array is (T, count)."""

    p_g: np.ndarray
    q_g: np.ndarray
    p_n: np.ndarray
    q_n: np.ndarray
    pf: np.ndarray
    qf: np.ndarray
    nu: np.ndarray
    current: np.ndarray
    compressor_demand: np.ndarray  # (T, electric compressors)

    @property
    def periods(self) -> int:
        return self.nu.shape[0]

    def vector(self) -> np.ndarray:
        """Flatten in the layout used by ``PowerVariables`` (and by the coupling matrix A)."""
        return np.concatenate([getattr(self, name).ravel() for name in POWER_BLOCKS])

    @classmethod
    def initial(cls, case: CoupledCase) -> "PowerState":
        """Zero dispatch projected onto the device boxes, flat unit voltage, zero flows."""
        T, net = case.periods, case.power

        def clipped(devices, lo, hi):
            return np.tile(
                np.array([np.clip(0.0, getattr(d, lo), getattr(d, hi)) for d in devices], dtype=float), (T, 1)
            ).reshape(T, len(devices))

        nu = np.tile(np.array([np.clip(1.0, b.v_min ** 2, b.v_max ** 2) for b in net.buses]), (T, 1))
        nu[:, net.bus_index[net.reference_bus]] = 1.0
        n_lines = len(net.lines)
        return cls(
            p_g=clipped(net.generators, "p_min", "p_max"),
            q_g=clipped(net.generators, "q_min", "q_max"),
            p_n=clipped(net.gas_generators, "p_min", "p_max"),
            q_n=clipped(net.gas_generators, "q_min", "q_max"),
            pf=np.zeros((T, n_lines)),
            qf=np.zeros((T, n_lines)),
            nu=nu.reshape(T, len(net.buses)),
            current=np.zeros((T, n_lines)),
            compressor_demand=np.zeros((T, len(case.electric_compressors))),
        )

    def total_cost(self, case: CoupledCase) -> float:
        return generation_cost(case, self.p_g)


def generation_cost(case: CoupledCase, p_g: np.ndarray) -> float:
    if not case.power.generators:
        return 0.0
    a = np.array([g.a for g in case.power.generators])
    b = np.array([g.b for g in case.power.generators])
    c = np.array([g.c for g in case.power.generators])
    return float(np.sum(a * p_g ** 2 + b * p_g + c))


def compressor_demand_from(case: CoupledCase, yc_in: np.ndarray) -> np.ndarray:
    """chi * alpha * y_in for every electric compressor, (T, electric compressors)."""
    idx = case.electric_compressors
    if not idx:
        return np.zeros((yc_in.shape[0], 0))
    comps = [case.gas.compressors[k] for k in idx]
    coef = np.array([c.chi * c.alpha for c in comps])
    return yc_in[:, idx] * coef


# ==============================
# Variables
# ==============================
@dataclass(frozen=True)
class PowerVariables:
    p_g: VariableBlock
    q_g: VariableBlock
    p_n: VariableBlock
    q_n: VariableBlock
    pf: VariableBlock
    qf: VariableBlock
    nu: VariableBlock
    current: VariableBlock

    @classmethod
    def register(cls, program: ConicProgram, case: CoupledCase) -> "PowerVariables":
        """Register the power blocks contiguously, in ``POWER_BLOCKS`` order."""
        T, net = case.periods, case.power
        G, N = net.generators, net.gas_generators
        L, B = len(net.lines), len(net.buses)

        nu_lo = np.array([b.v_min ** 2 for b in net.buses])
        nu_hi = np.array([b.v_max ** 2 for b in net.buses])
        ref = net.bus_index[net.reference_bus]
        nu_lo[ref] = nu_hi[ref] = 1.0

        def attr(devs, name):
            return np.array([getattr(d, name) for d in devs], dtype=float)

        return cls(
            p_g=program.add_variable_block("p_g", (T, len(G)), attr(G, "p_min"), attr(G, "p_max")),
            q_g=program.add_variable_block("q_g", (T, len(G)), attr(G, "q_min"), attr(G, "q_max")),
            p_n=program.add_variable_block("p_n", (T, len(N)), attr(N, "p_min"), attr(N, "p_max")),
            q_n=program.add_variable_block("q_n", (T, len(N)), attr(N, "q_min"), attr(N, "q_max")),
            pf=program.add_variable_block("pf", (T, L), 0.0),  # no reverse flow
            qf=program.add_variable_block("qf", (T, L)),
            nu=program.add_variable_block("nu", (T, B), nu_lo, nu_hi),
            current=program.add_variable_block(
                "current", (T, L), 0.0, np.array([line.i_max_sq for line in net.lines], dtype=float)
            ),
        )

    @classmethod
    def attach(cls, program: ConicProgram) -> "PowerVariables":
        return cls(**{name: program.block(name) for name in POWER_BLOCKS})

    @property
    def offset(self) -> int:
        return self.p_g.start

    @property
    def size(self) -> int:
        return sum(getattr(self, f.name).size for f in fields(self))


# ==============================
# Constraint helpers
# ==============================
def active_balance_expr(case: CoupledCase, pv: PowerVariables, bus: str, t: int) -> AffineExpr:
    """Generation + line inflow - losses - outflow - shunt - load at ``bus``.

    Compressor demand is left to the caller (fixed value, gas variable or coupling row).
    """
    net = case.power
    i = net.bus_index[bus]
    e = AffineExpr(constant=-case.active_demand[t, i])
    for k in net.generators_at.get(bus, []):
        e.add_term(pv.p_g.index(t, k), 1.0)
    for k in net.gas_generators_at.get(bus, []):
        e.add_term(pv.p_n.index(t, k), 1.0)
    for k in net.lines_into[bus]:
        e.add_term(pv.pf.index(t, k), 1.0)
        e.add_term(pv.current.index(t, k), -net.lines[k].r)
    for k in net.lines_out_of[bus]:
        e.add_term(pv.pf.index(t, k), -1.0)
    e.add_term(pv.nu.index(t, i), -net.buses[i].g_shunt)
    return e


def reactive_balance_expr(case: CoupledCase, pv: PowerVariables, bus: str, t: int) -> AffineExpr:
    net = case.power
    i = net.bus_index[bus]
    e = AffineExpr(constant=-case.reactive_demand[t, i])
    for k in net.generators_at.get(bus, []):
        e.add_term(pv.q_g.index(t, k), 1.0)
    for k in net.gas_generators_at.get(bus, []):
        e.add_term(pv.q_n.index(t, k), 1.0)
    for k in net.lines_into[bus]:
        e.add_term(pv.qf.index(t, k), 1.0)
        e.add_term(pv.current.index(t, k), -net.lines[k].x)
    for k in net.lines_out_of[bus]:
        e.add_term(pv.qf.index(t, k), -1.0)
    e.add_term(pv.nu.index(t, i), -net.buses[i].b_shunt)
    return e


def add_power_constraints(
    program: ConicProgram,
    case: CoupledCase,
    pv: PowerVariables,
    coupled: str = "fixed",
    compressor_demand: np.ndarray | None = None,
) -> list[int]:
    """Balance, voltage-drop and apparent-power cones for every period.

    ``coupled='fixed'`` enforces balance at compressor-serving buses with the given
    (T, electric compressors) demand; ``coupled='external'`` leaves those rows to
    the caller. Returns the ids of the rotated cones, row-major over (t, line).
    """
    T, net = case.periods, case.power
    coupled_buses = set(case.coupled_buses)
    position = {k: j for j, k in enumerate(case.electric_compressors)}
    if compressor_demand is None:
        compressor_demand = np.zeros((T, len(position)))
    compressor_demand = np.asarray(compressor_demand, dtype=float)
    if compressor_demand.shape != (T, len(position)):
        raise ProgramError(
            f"compressor demand must be {(T, len(position))}, got {compressor_demand.shape}"
        )

    cone_ids = []
    for t in range(T):
        for bus in net.buses:
            if bus.id in coupled_buses:
                if coupled == "fixed":
                    fixed = sum(compressor_demand[t, position[k]] for k in case.compressors_at_bus[bus.id])
                    program.add_equality(active_balance_expr(case, pv, bus.id, t), fixed, label=f"P[{bus.id},{t}]")
            else:
                program.add_equality(active_balance_expr(case, pv, bus.id, t), label=f"P[{bus.id},{t}]")
            program.add_equality(reactive_balance_expr(case, pv, bus.id, t), label=f"Q[{bus.id},{t}]")

        for k, line in enumerate(net.lines):
            i, j = net.bus_index[line.from_bus], net.bus_index[line.to_bus]
            drop = AffineExpr()
            drop.add_term(pv.nu.index(t, j), 1.0)
            drop.add_term(pv.nu.index(t, i), -1.0)
            drop.add_term(pv.pf.index(t, k), 2.0 * line.r)
            drop.add_term(pv.qf.index(t, k), 2.0 * line.x)
            drop.add_term(pv.current.index(t, k), -(line.r ** 2 + line.x ** 2))
            program.add_equality(drop, label=f"V[{line.id},{t}]")
            cone_ids.append(program.add_rotated(
                pv.current.expr(t, k), pv.nu.expr(t, i), [pv.pf.expr(t, k), pv.qf.expr(t, k)],
                label=f"S[{line.id},{t}]",
            ))
    return cone_ids


def add_generation_cost(program: ConicProgram, case: CoupledCase, pv: PowerVariables) -> None:
    for t in range(case.periods):
        for k, gen in enumerate(case.power.generators):
            if gen.a > 0:
                program.add_quadratic_objective(pv.p_g.expr(t, k), gen.a)
            program.add_linear_objective(pv.p_g.expr(t, k, coef=gen.b) + gen.c)


# ==============================
# Public API
# ==============================
def build_opf(case: CoupledCase, context=None, compressor_demand: np.ndarray | None = None) -> ConicProgram:
    """OPF subproblem.

    Without ``context`` the compressor-serving buses are balanced against the fixed
    ``compressor_demand``. With a coupling context (ADMM x-update) those rows move
    into the objective as augmented-Lagrangian terms around the fixed gas point.
    """
    program = ConicProgram("opf")
    pv = PowerVariables.register(program, case)
    add_power_constraints(
        program, case, pv,
        coupled="fixed" if context is None else "external",
        compressor_demand=compressor_demand,
    )
    add_generation_cost(program, case, pv)
    if context is not None:
        context.add_augmented_terms(program, side="power", offset=pv.offset)
    return program


def extract_power_state(
    program: ConicProgram, solution: ConicSolution, compressor_demand: np.ndarray | None = None
) -> PowerState:
    if not solution.optimal:
        raise SubproblemError("opf", solution.status.value)
    pv = PowerVariables.attach(program)
    lower, upper = program.bounds()
    values = {}
    for name in POWER_BLOCKS:
        block = getattr(pv, name)
        vals = block.values(solution.x)
        lo = lower[block.start:block.start + block.size].reshape(block.shape)
        hi = upper[block.start:block.start + block.size].reshape(block.shape)
        excess = np.maximum(lo - vals, vals - hi)
        if excess.size and excess.max() > BOUND_TOL:
            logger.warning(f"⚠️ {name} exceeds its bounds by {excess.max():.2e}")
        values[name] = vals
    T = pv.nu.shape[0]
    if compressor_demand is None:
        compressor_demand = np.zeros((T, 0))
    return PowerState(**values, compressor_demand=np.asarray(compressor_demand, dtype=float))
