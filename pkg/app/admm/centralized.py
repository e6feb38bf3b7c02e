# app/admm/centralized.py
"""Joint power + gas solve with the coupling rows as hard equalities.

Serves as the reference answer the distributed run is compared against.
"""

import dataclasses
import logging
from typing import NamedTuple

import numpy as np

from app.admm.coupling import coupling_rows
from app.conic.backend import SolveStatus, SolverOptions, solve
from app.conic.program import ConicProgram
from app.errors import SubproblemError
from app.model.network import CoupledCase
from app.ogf.gas_model import GAS_BLOCKS, GasState, add_purchase_cost, build_gas_constraints, extract_gas_state
from app.ogf.ssa import SsaParams, SsaState, add_concave_cuts, iterate_ssa
from app.opf.power_model import (
    POWER_BLOCKS,
    PowerState,
    PowerVariables,
    add_generation_cost,
    add_power_constraints,
    compressor_demand_from,
    extract_power_state,
)

logger = logging.getLogger(__name__)


class JointPoint(NamedTuple):
    power: PowerState
    gas: GasState


class CentralizedResult(NamedTuple):
    power: PowerState
    gas: GasState
    objective: float
    ssa: SsaState | None
    converged: bool


def build_joint_program(case: CoupledCase, mode: str, name: str = "ogpf"):
    program = ConicProgram(name)
    pv = PowerVariables.register(program, case)
    add_power_constraints(program, case, pv, coupled="external")
    handles = build_gas_constraints(case, program, mode, coupled="external")
    gv = handles.variables
    for (family, owner, t), expr in coupling_rows(case, pv, gv):
        program.add_equality(expr, label=f"C[{family}:{owner},{t}]")
    add_generation_cost(program, case, pv)
    add_purchase_cost(program, case, gv)
    return program, pv, gv


def _extract(case, program, solution, stage) -> JointPoint:
    gas = extract_gas_state(program, solution, stage=stage)
    power = extract_power_state(program, solution, compressor_demand_from(case, gas.yc_in))
    return JointPoint(power, gas)


def _objective(case: CoupledCase, point: JointPoint) -> float:
    return point.power.total_cost(case) + point.gas.purchase_cost(case)


class JointSsaProblem:
    def __init__(self, case: CoupledCase, options: SolverOptions | None = None, stage: str = "centralized"):
        self.case = case
        self.options = options
        self.stage = stage

    def build(self, state: SsaState) -> ConicProgram:
        program, _, gv = build_joint_program(self.case, "ssa", name=f"ogpf-ssa-{state.iteration}")
        add_concave_cuts(program, self.case, gv, state.point, state.rho)
        return program

    def extract(self, program, solution) -> JointPoint:
        return _extract(self.case, program, solution, self.stage)

    def gas_of(self, point: JointPoint) -> GasState:
        return point.gas

    def fill(self, program, point: JointPoint, slacks) -> np.ndarray:
        values = {name: getattr(point.power, name) for name in POWER_BLOCKS}
        values.update({name: getattr(point.gas, name) for name in GAS_BLOCKS})
        values["slack"] = slacks
        return program.vector(values)


def solve_centralized_relaxation(case: CoupledCase, options: SolverOptions | None = None) -> CentralizedResult:
    """Convex joint problem with the gas relaxation; its objective is a lower bound."""
    program, _, _ = build_joint_program(case, "relaxation", name="ogpf-relaxation")
    solution = solve(program, options)
    if not solution.optimal:
        detail = "coupled system cannot meet demand" if solution.status == SolveStatus.INFEASIBLE else ""
        raise SubproblemError("centralized-relaxation", solution.status.value, detail=detail)
    point = _extract(case, program, solution, "centralized-relaxation")
    objective = _objective(case, point)
    logger.info(f"📊 Centralized relaxation objective {objective:.6g}")
    return CentralizedResult(point.power, point.gas, objective, None, True)


def solve_centralized(
    case: CoupledCase, params: SsaParams | None = None, options: SolverOptions | None = None
) -> CentralizedResult:
    """SSA over the whole coupled problem (the power side is already convex)."""
    params = params or SsaParams()
    if params.warm_start == "relaxation":
        relaxed = solve_centralized_relaxation(case, options)
        start = JointPoint(relaxed.power, relaxed.gas)
    else:
        start = JointPoint(PowerState.initial(case), GasState.zeros(case))

    point, state, converged = iterate_ssa(JointSsaProblem(case, options), start, params)
    power = dataclasses.replace(point.power, compressor_demand=compressor_demand_from(case, point.gas.yc_in))
    objective = _objective(case, point)
    logger.info(f"✅ Centralized objective {objective:.6g} after {state.iteration} SSA iterations")
    return CentralizedResult(power, point.gas, objective, state, converged)
