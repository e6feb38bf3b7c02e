# app/ogf/ssa.py
"""Sequential SOCP for the gas side (penalty convex-concave procedure).

The Weymouth equality is split into a convex cone and a concave remainder;
the remainder is linearized at the current point and its violation is paid
for through penalized slacks whose weight grows every iteration.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Protocol

import numpy as np
import pandas as pd

from app.config import settings
from app.conic.backend import ConicSolution, SolverOptions, solve
from app.conic.expression import AffineExpr
from app.conic.program import ConicProgram, VariableBlock
from app.errors import ProgramError, SubproblemError
from app.model.network import CoupledCase
from app.ogf.gas_model import (
    GAS_BLOCKS,
    GasState,
    GasVariables,
    add_purchase_cost,
    build_gas_constraints,
    extract_gas_state,
    pipe_arrays,
)
from app.ogf.relaxation import solve_relaxation

logger = logging.getLogger(__name__)

WARM_STARTS = ("relaxation", "zero")
RATIO_GUARD = 1e-9


# ==============================
# Parameters / state
# ==============================
@dataclass
class SsaParams:
    delta: float = settings.SSA_DELTA
    rho0: float = settings.SSA_RHO0
    rho_max: float = settings.SSA_RHO_MAX
    epsilon: float = settings.SSA_EPSILON
    kappa: float = settings.SSA_KAPPA
    max_iter: int = settings.SSA_MAX_ITER
    warm_start: str = settings.SSA_WARM_START
    slack_floor: float = settings.SSA_SLACK_FLOOR

    def __post_init__(self):
        if self.delta < 0 or self.epsilon < 0:
            raise ProgramError("SSA tolerances must be nonnegative")
        if not 0 <= self.rho0 <= self.rho_max:
            raise ProgramError("SSA penalty must satisfy 0 <= rho0 <= rho_max")
        if self.kappa < 1:
            raise ProgramError("SSA penalty growth kappa must be >= 1")
        if self.max_iter < 1:
            raise ProgramError("SSA iteration limit must be positive")
        if self.warm_start not in WARM_STARTS:
            raise ProgramError(f"unknown warm start '{self.warm_start}' (expected one of {WARM_STARTS})")


@dataclass
class SsaState:
    params: SsaParams
    point: GasState  # current linearization point
    rho: float
    iteration: int = 0
    slacks: np.ndarray | None = None
    objective_history: list[float] = field(default_factory=list)
    rho_history: list[float] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        """j, rho, objective, max slack, max Weymouth residual per iteration."""
        columns = ["j", "rho", "objective", "max_slack", "max_weymouth_residual", "objective_test", "slack_test"]
        return pd.DataFrame(self.trace, columns=columns)


class SsaResult(NamedTuple):
    gas: GasState
    state: SsaState
    converged: bool


# ==============================
# Concave side
# ==============================
def linearize_concave(point: GasState, case: CoupledCase, pipe: int, period: int, gv: GasVariables) -> AffineExpr:
    """First-order expansion of (y_in+y_out)^2/4 + phi u_tail^2 around ``point``."""
    phi = case.gas.pipelines[pipe].phi
    tail = case.gas.node_index[case.gas.pipelines[pipe].to_node]
    s_k = float(point.y_in[period, pipe] + point.y_out[period, pipe])
    u_k = float(point.u[period, tail])

    e = AffineExpr(constant=-s_k ** 2 / 4.0 - phi * u_k ** 2)
    e.add_term(gv.y_in.index(period, pipe), s_k / 2.0)
    e.add_term(gv.y_out.index(period, pipe), s_k / 2.0)
    e.add_term(gv.u.index(period, tail), 2.0 * phi * u_k)
    return e


def concave_gap(case: CoupledCase, point: GasState, base: GasState) -> np.ndarray:
    """phi u_head^2 - g_hat(point; base), per (t, pipeline)."""
    head, tail, phi = pipe_arrays(case)
    s = point.y_in + point.y_out
    s_k = base.y_in + base.y_out
    u_k = base.u[:, tail]
    g_hat = s_k * s / 2.0 - s_k ** 2 / 4.0 - phi * u_k ** 2 + 2.0 * phi * u_k * point.u[:, tail]
    return phi * point.u[:, head] ** 2 - g_hat


def add_concave_cuts(
    program: ConicProgram, case: CoupledCase, gv: GasVariables, point: GasState, rho: float
) -> VariableBlock:
    """phi u_head^2 <= g_hat + slack for every (t, pipeline), with rho * sum(slack) in the objective."""
    T, pipes = case.periods, case.gas.pipelines
    slack = program.add_variable_block("slack", (T, len(pipes)), 0.0)
    one = AffineExpr.const(1.0)
    for t in range(T):
        for k, pipe in enumerate(pipes):
            head = case.gas.node_index[pipe.from_node]
            rhs = linearize_concave(point, case, k, t, gv) + slack.expr(t, k)
            program.add_rotated(rhs, one, [gv.u.expr(t, head) * math.sqrt(pipe.phi)], label=f"cut[{pipe.id},{t}]")
            program.add_linear_objective(slack.expr(t, k, coef=rho))
    return slack


def build_ssa_subproblem(
    case: CoupledCase, ssa_state: SsaState, context=None, dg_offtake: np.ndarray | None = None
) -> ConicProgram:
    program = ConicProgram(f"ogf-ssa-{ssa_state.iteration}")
    handles = build_gas_constraints(
        case, program, "ssa",
        coupled="fixed" if context is None else "external",
        dg_offtake=dg_offtake,
    )
    gv = handles.variables
    add_purchase_cost(program, case, gv)
    add_concave_cuts(program, case, gv, ssa_state.point, ssa_state.rho)
    if context is not None:
        context.add_augmented_terms(program, side="gas", offset=gv.offset)
    return program


# ==============================
# Shared loop
# ==============================
class SsaProblem(Protocol):
    case: CoupledCase
    stage: str
    options: SolverOptions | None

    def build(self, state: SsaState) -> ConicProgram: ...

    def extract(self, program: ConicProgram, solution: ConicSolution) -> Any: ...

    def gas_of(self, point: Any) -> GasState: ...

    def fill(self, program: ConicProgram, point: Any, slacks: np.ndarray) -> np.ndarray: ...


class GasSsaProblem:
    """Gas-only subproblem, optionally carrying the ADMM coupling context."""

    def __init__(self, case, context=None, dg_offtake=None, options=None, stage="ssa"):
        self.case = case
        self.context = context
        self.dg_offtake = dg_offtake
        self.options = options
        self.stage = stage

    def build(self, state: SsaState) -> ConicProgram:
        return build_ssa_subproblem(self.case, state, self.context, self.dg_offtake)

    def extract(self, program, solution) -> GasState:
        return extract_gas_state(program, solution, stage=self.stage)

    def gas_of(self, point: GasState) -> GasState:
        return point

    def fill(self, program, point: GasState, slacks) -> np.ndarray:
        values = {name: getattr(point, name) for name in GAS_BLOCKS}
        values["slack"] = slacks
        return program.vector(values)


def iterate_ssa(problem: SsaProblem, start: Any, params: SsaParams) -> tuple[Any, SsaState, bool]:
    """Run the penalized sequential-SOCP loop from ``start`` until both stopping tests hold."""
    case = problem.case
    state = SsaState(params=params, point=problem.gas_of(start), rho=params.rho0)
    program = problem.build(state)

    start_slacks = np.maximum(0.0, concave_gap(case, state.point, state.point))
    obj_prev = program.evaluate_objective(problem.fill(program, start, start_slacks))
    state.objective_history.append(obj_prev)
    state.rho_history.append(state.rho)

    point, converged = start, False
    for j in range(params.max_iter):
        if j > 0:
            program = problem.build(state)
        solution = solve(program, problem.options)
        if not solution.optimal:
            logger.error(f"❌ {problem.stage} subproblem {j} returned {solution.status.value}")
            raise SubproblemError(problem.stage, solution.status.value, iteration=j)

        point = problem.extract(program, solution)
        gas = problem.gas_of(point)
        slacks = program.block("slack").values(solution.x)
        objective = float(solution.objective)

        gap = np.abs(concave_gap(case, gas, state.point))
        ratio = np.where(slacks > params.slack_floor, slacks / np.maximum(gap, RATIO_GUARD), 0.0)
        objective_test = abs(objective - obj_prev) <= params.delta
        slack_test = float(ratio.max()) <= params.epsilon if ratio.size else True
        residual = gas.weymouth_residual(case)

        state.trace.append({
            "j": j,
            "rho": state.rho,
            "objective": objective,
            "max_slack": float(slacks.max()) if slacks.size else 0.0,
            "max_weymouth_residual": float(residual.max()) if residual.size else 0.0,
            "objective_test": objective_test,
            "slack_test": slack_test,
        })
        logger.debug(
            f"{problem.stage} j={j} rho={state.rho:.3g} obj={objective:.6g} "
            f"slack={state.trace[-1]['max_slack']:.2e} res={state.trace[-1]['max_weymouth_residual']:.2e}"
        )

        state.point, state.slacks = gas, slacks
        state.objective_history.append(objective)
        state.rho = min(params.kappa * state.rho, params.rho_max)
        state.rho_history.append(state.rho)
        state.iteration = j + 1
        obj_prev = objective

        if objective_test and slack_test:
            converged = True
            break

    if converged:
        logger.info(f"✅ {problem.stage} converged in {state.iteration} iterations (obj {obj_prev:.6g})")
    else:
        logger.warning(f"⚠️ {problem.stage} hit the iteration limit ({params.max_iter}) without converging")
    return point, state, converged


# ==============================
# Public API
# ==============================
def run_ssa(
    case: CoupledCase,
    context=None,
    initial: GasState | None = None,
    params: SsaParams | None = None,
    options: SolverOptions | None = None,
    dg_offtake: np.ndarray | None = None,
) -> SsaResult:
    """Gas subproblem by SSA; ``initial`` defaults to the configured warm start."""
    params = params or SsaParams()
    if initial is None:
        if params.warm_start == "relaxation":
            initial = solve_relaxation(case, context, dg_offtake, options).gas
        else:
            initial = GasState.zeros(case)

    problem = GasSsaProblem(case, context, dg_offtake, options)
    gas, state, converged = iterate_ssa(problem, initial, params)
    return SsaResult(gas, state, converged)
