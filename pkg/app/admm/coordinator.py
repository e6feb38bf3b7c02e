# app/admm/coordinator.py
"""Two-block ADMM between the power OPF and the gas OGF."""

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from app.admm.coupling import CouplingContext, CouplingSystem, assemble_coupling
from app.config import settings
from app.conic.backend import SolverOptions, solve
from app.errors import ProgramError, SubproblemError
from app.model.network import CoupledCase
from app.ogf.gas_model import GasState
from app.ogf.relaxation import solve_relaxation
from app.ogf.ssa import SsaParams, SsaState, run_ssa
from app.opf.power_model import PowerState, build_opf, compressor_demand_from, extract_power_state

logger = logging.getLogger(__name__)

GAS_MODELS = ("ssa", "relaxation")


@dataclass
class AdmmOptions:
    penalty: float = settings.ADMM_PENALTY
    tolerance: float = settings.ADMM_TOLERANCE
    max_iter: int = settings.ADMM_MAX_ITER
    gas_model: str = "ssa"
    ssa: SsaParams = field(default_factory=SsaParams)
    solver: SolverOptions | None = None
    x0: PowerState | None = None
    duals0: np.ndarray | None = None

    def __post_init__(self):
        if self.penalty <= 0:
            raise ProgramError("ADMM penalty d must be positive")
        if self.tolerance <= 0:
            raise ProgramError("ADMM tolerance must be positive")
        if self.max_iter < 1:
            raise ProgramError("ADMM iteration limit must be positive")
        if self.gas_model not in GAS_MODELS:
            raise ProgramError(f"unknown gas model '{self.gas_model}' (expected one of {GAS_MODELS})")


@dataclass
class AdmmState:
    duals: np.ndarray
    penalty: float
    tolerance: float
    max_iter: int
    iteration: int = 0
    residual_history: list[float] = field(default_factory=list)
    power_objective_history: list[float] = field(default_factory=list)
    gas_objective_history: list[float] = field(default_factory=list)
    dual_norm_history: list[float] = field(default_factory=list)
    ssa_iterations: list[int] = field(default_factory=list)
    ssa_traces: list[pd.DataFrame | None] = field(default_factory=list)  # None for relaxation z-updates

    @property
    def objective(self) -> float:
        if not self.power_objective_history:
            return float("nan")
        return self.power_objective_history[-1] + self.gas_objective_history[-1]

    def trace_frame(self) -> pd.DataFrame:
        """k, residual, power objective, gas objective, dual norm per outer iteration."""
        return pd.DataFrame({
            "k": np.arange(len(self.residual_history), dtype=int),
            "residual": self.residual_history,
            "power_objective": self.power_objective_history,
            "gas_objective": self.gas_objective_history,
            "dual_norm": self.dual_norm_history,
        })

    def ssa_trace_frame(self) -> pd.DataFrame:
        """Inner SSA traces of every z-update, keyed by the outer iteration k."""
        frames = [trace.assign(admm_iteration=k) for k, trace in enumerate(self.ssa_traces) if trace is not None]
        if not frames:
            return pd.DataFrame(columns=["admm_iteration", "j"])
        return pd.concat(frames, ignore_index=True)


class AdmmResult(NamedTuple):
    power: PowerState
    gas: GasState
    state: AdmmState
    converged: bool


def update_dual(state: AdmmState, residual: np.ndarray) -> np.ndarray:
    """xi <- xi + d * r, elementwise."""
    residual = np.asarray(residual, dtype=float)
    if residual.shape != state.duals.shape:
        raise ProgramError(f"residual has shape {residual.shape}, duals have {state.duals.shape}")
    state.duals = state.duals + state.penalty * residual
    return state.duals


def _z_update(case, system, state, x, z_prev, k, options) -> tuple[GasState, SsaState | None]:
    context = CouplingContext.for_gas(system, x.vector(), state.duals, state.penalty)
    if options.gas_model == "relaxation":
        return solve_relaxation(case, context, options=options.solver).gas, None
    initial = None if k == 0 else z_prev
    result = run_ssa(case, context, initial=initial, params=options.ssa, options=options.solver)
    if not result.converged:
        logger.warning(f"⚠️ ADMM k={k}: gas SSA stopped without converging")
    return result.gas, result.state


def run_admm(case: CoupledCase, options: AdmmOptions | None = None, system: CouplingSystem | None = None) -> AdmmResult:
    """Alternate power and gas updates with dual ascent on the coupling rows.

    Stops when max|A x + B z - c| <= tolerance; hitting the iteration limit
    returns ``converged=False`` rather than raising.
    """
    options = options or AdmmOptions()
    system = system or assemble_coupling(case)
    duals = np.zeros(system.rows) if options.duals0 is None else np.array(options.duals0, dtype=float)
    state = AdmmState(duals, options.penalty, options.tolerance, options.max_iter)
    if duals.shape != (system.rows,):
        raise ProgramError(f"initial duals must have {system.rows} entries")

    x = options.x0 or PowerState.initial(case)
    z = solve_relaxation(
        case, CouplingContext.for_gas(system, x.vector(), state.duals, state.penalty), options=options.solver
    ).gas

    logger.info(f"🚀 ADMM on '{case.name}': d={state.penalty}, tol={state.tolerance}, k_max={state.max_iter}")
    started = time.perf_counter()
    converged = False
    for k in range(options.max_iter):
        # x-update
        program = build_opf(case, context=CouplingContext.for_power(system, z.vector(), state.duals, state.penalty))
        solution = solve(program, options.solver)
        if not solution.optimal:
            logger.error(f"❌ ADMM k={k}: power update returned {solution.status.value}")
            raise SubproblemError("admm-power", solution.status.value, iteration=k)
        x = extract_power_state(program, solution, compressor_demand_from(case, z.yc_in))

        # z-update
        try:
            z, inner = _z_update(case, system, state, x, z, k, options)
        except SubproblemError as e:
            logger.error(f"❌ ADMM k={k}: gas update failed: {e}")
            raise SubproblemError("admm-gas", e.status, iteration=k, detail=str(e)) from e

        residual = system.residual(x.vector(), z.vector())
        update_dual(state, residual)
        worst = float(np.max(np.abs(residual))) if residual.size else 0.0

        state.iteration = k + 1
        state.residual_history.append(worst)
        state.power_objective_history.append(x.total_cost(case))
        state.gas_objective_history.append(z.purchase_cost(case))
        state.dual_norm_history.append(float(np.linalg.norm(state.duals)))
        state.ssa_iterations.append(0 if inner is None else inner.iteration)
        state.ssa_traces.append(None if inner is None else inner.trace_frame())
        logger.info(f"📊 ADMM k={k}: residual={worst:.3e}, objective={state.objective:.6g}")

        if worst <= state.tolerance:
            converged = True
            break

    x = dataclasses.replace(x, compressor_demand=compressor_demand_from(case, z.yc_in))
    elapsed = time.perf_counter() - started
    if converged:
        logger.info(f"✅ ADMM converged in {state.iteration} iterations ({elapsed:.1f}s), objective {state.objective:.6g}")
    else:
        logger.warning(
            f"⚠️ ADMM stopped at k_max={state.max_iter} with residual {state.residual_history[-1]:.3e}"
        )
    return AdmmResult(x, z, state, converged)
