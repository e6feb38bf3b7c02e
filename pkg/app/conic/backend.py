# app/conic/backend.py
import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import cvxpy as cp
import numpy as np

from app.config import settings
from app.conic.expression import Variable, as_expr
from app.conic.program import ConicProgram, StandardForm
from app.errors import ProgramError

logger = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL_FAILURE = "numerical-failure"


_STATUS_MAP = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolveStatus.OPTIMAL,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolveStatus.INFEASIBLE,
    cp.UNBOUNDED: SolveStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SolveStatus.UNBOUNDED,
    cp.USER_LIMIT: SolveStatus.ITERATION_LIMIT,
}

_INACCURATE = (cp.OPTIMAL_INACCURATE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED_INACCURATE)


def map_status(raw: str, solver: str = settings.SOLVER_NAME) -> SolveStatus:
    """cvxpy status -> SolveStatus; inaccurate statuses keep their family with a warning."""
    status = _STATUS_MAP.get(raw, SolveStatus.NUMERICAL_FAILURE)
    if raw in _INACCURATE:
        logger.warning(f"⚠️ {solver} returned '{raw}', accepted as {status.value}")
    return status


@dataclass
class SolverOptions:
    feasibility_tol: float = settings.SOLVER_FEAS_TOL
    gap_tol: float = settings.SOLVER_GAP_TOL
    max_iter: int = settings.SOLVER_MAX_ITER
    verbose: bool = False
    solver: str = settings.SOLVER_NAME
    quadratic_epigraph: bool = False  # force cone-epigraph form of the squared terms

    def __post_init__(self):
        if not (self.feasibility_tol > 0 and self.gap_tol > 0):
            raise ProgramError("solver tolerances must be positive")
        if self.max_iter < 1:
            raise ProgramError("solver iteration limit must be positive")
        self.solver = self.solver.upper()

    def backend_kwargs(self) -> dict:
        if self.solver == "CLARABEL":
            return {
                "tol_feas": self.feasibility_tol,
                "tol_gap_abs": self.gap_tol,
                "tol_gap_rel": self.gap_tol,
                "max_iter": self.max_iter,
            }
        if self.solver == "ECOS":
            return {
                "feastol": self.feasibility_tol,
                "abstol": self.gap_tol,
                "reltol": self.gap_tol,
                "max_iters": self.max_iter,
            }
        if self.solver == "SCS":
            return {"eps_abs": self.feasibility_tol, "eps_rel": self.gap_tol, "max_iters": self.max_iter}
        return {}


@dataclass
class ConicSolution:
    status: SolveStatus
    x: np.ndarray
    objective: float
    equality_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    inequality_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int | None = None
    solve_time: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    def value(self, item) -> float:
        if isinstance(item, Variable):
            return float(self.x[item.index])
        return as_expr(item).evaluate(self.x)


# ==============================
# cvxpy reference backend
# ==============================
class CvxpyBackend:
    """Compiles a ``StandardForm`` into one cvxpy problem over a single vector variable."""

    name = "cvxpy"

    def solve(self, sf: StandardForm, options: SolverOptions) -> ConicSolution:
        if sf.n == 0:
            return ConicSolution(SolveStatus.OPTIMAL, np.zeros(0), sf.objective_constant)

        x = cp.Variable(sf.n)
        constraints = []
        eq_con = ineq_con = None

        lo_idx = np.flatnonzero(np.isfinite(sf.lower))
        hi_idx = np.flatnonzero(np.isfinite(sf.upper))
        if lo_idx.size:
            constraints.append(x[lo_idx] >= sf.lower[lo_idx])
        if hi_idx.size:
            constraints.append(x[hi_idx] <= sf.upper[hi_idx])
        if sf.A_eq.shape[0]:
            eq_con = sf.A_eq @ x == sf.b_eq
            constraints.append(eq_con)
        if sf.G.shape[0]:
            ineq_con = sf.G @ x <= sf.h
            constraints.append(ineq_con)
        for group in sf.cone_groups:
            t = group.heads @ x + group.head_const
            tails = cp.vstack([m @ x + k for m, k in zip(group.tails, group.tail_const)])
            constraints.append(cp.SOC(t, tails, axis=0))

        objective = sf.c @ x + sf.objective_constant
        if sf.F.shape[0]:
            residual = cp.multiply(np.sqrt(sf.w), sf.F @ x + sf.f)
            if options.quadratic_epigraph:
                s = cp.Variable()
                # ||r||^2 <= s  <=>  ||(2r, s-1)|| <= s+1
                constraints.append(cp.SOC(s + 1, cp.hstack([2 * residual, cp.reshape(s - 1, (1,), order="F")])))
                objective = objective + s
            else:
                objective = objective + cp.sum_squares(residual)

        problem = cp.Problem(cp.Minimize(objective), constraints)
        started = time.perf_counter()
        try:
            problem.solve(solver=options.solver, verbose=options.verbose, **options.backend_kwargs())
        except (cp.error.SolverError, ArithmeticError, ValueError) as e:
            logger.error(f"❌ Backend failure in {options.solver}: {e}", exc_info=True)
            return ConicSolution(
                SolveStatus.NUMERICAL_FAILURE, np.full(sf.n, np.nan), float("nan"),
                solve_time=time.perf_counter() - started,
            )
        elapsed = time.perf_counter() - started

        status = map_status(problem.status, options.solver)

        stats = problem.solver_stats
        values = np.asarray(x.value, dtype=float) if x.value is not None else np.full(sf.n, np.nan)
        return ConicSolution(
            status=status,
            x=values,
            objective=float(problem.value) if status == SolveStatus.OPTIMAL else float("nan"),
            equality_duals=_duals(eq_con),
            inequality_duals=_duals(ineq_con),
            iterations=getattr(stats, "num_iters", None),
            solve_time=elapsed,
        )


def _duals(con) -> np.ndarray:
    if con is None or con.dual_value is None:
        return np.zeros(0)
    return np.atleast_1d(np.asarray(con.dual_value, dtype=float))


_BACKENDS = {"cvxpy": CvxpyBackend()}


def solve(program: ConicProgram, options: SolverOptions | None = None, backend: str = "cvxpy") -> ConicSolution:
    """Solve ``program``; backend errors come back as a numerical-failure status."""
    options = options or SolverOptions()
    sf = program.to_standard_form()
    solution = _BACKENDS[backend].solve(sf, options)
    logger.debug(
        f"{program.summary()} -> {solution.status.value} "
        f"(obj={solution.objective:.6g}, iters={solution.iterations}, {solution.solve_time:.3f}s)"
    )
    return solution
