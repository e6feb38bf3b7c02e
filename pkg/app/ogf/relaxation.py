# app/ogf/relaxation.py
import logging
from typing import NamedTuple

import numpy as np

from app.conic.backend import ConicSolution, SolveStatus, SolverOptions, solve
from app.conic.program import ConicProgram
from app.errors import SubproblemError
from app.model.network import CoupledCase
from app.ogf.gas_model import GasState, add_purchase_cost, build_gas_constraints, extract_gas_state

logger = logging.getLogger(__name__)


class RelaxationResult(NamedTuple):
    gas: GasState
    solution: ConicSolution


def build_relaxation(case: CoupledCase, context=None, dg_offtake: np.ndarray | None = None) -> ConicProgram:
    program = ConicProgram("ogf-relaxation")
    handles = build_gas_constraints(
        case, program, "relaxation",
        coupled="fixed" if context is None else "external",
        dg_offtake=dg_offtake,
    )
    add_purchase_cost(program, case, handles.variables)
    if context is not None:
        context.add_augmented_terms(program, side="gas", offset=handles.variables.offset)
    return program


def solve_relaxation(
    case: CoupledCase,
    context=None,
    dg_offtake: np.ndarray | None = None,
    options: SolverOptions | None = None,
) -> RelaxationResult:
    """Gas subproblem with the Weymouth equality replaced by its pressure-square relaxation.

    The objective is a lower bound on the SSA objective for the same context;
    the state is the default SSA warm start.
    """
    program = build_relaxation(case, context, dg_offtake)
    solution = solve(program, options)
    if not solution.optimal:
        detail = "relaxed gas system cannot meet demand" if solution.status == SolveStatus.INFEASIBLE else ""
        logger.error(f"❌ Gas relaxation failed: {solution.status.value}")
        raise SubproblemError("relaxation", solution.status.value, detail=detail)

    gas = extract_gas_state(program, solution, stage="relaxation")
    residual = gas.weymouth_residual(case)
    logger.info(
        f"📊 Relaxation objective {solution.objective:.6g}, "
        f"max Weymouth residual {residual.max() if residual.size else 0.0:.2e}"
    )
    return RelaxationResult(gas, solution)
