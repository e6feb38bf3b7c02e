import dataclasses

import numpy as np
import pytest

from app.admm.coupling import CouplingContext, assemble_coupling
from app.conic.backend import ConicSolution, SolveStatus, solve
from app.errors import ProgramError, SubproblemError
from app.model.case_loader import case_from_dict
from app.opf.exactness import check_soc_exactness
from app.opf.power_model import (
    PowerState,
    build_opf,
    compressor_demand_from,
    extract_power_state,
    generation_cost,
)
from app.oracle.brute_force import distflow_sweep


def _solve_opf(case, context=None):
    program = build_opf(case, context=context)
    solution = solve(program)
    assert solution.optimal
    return program, solution, extract_power_state(program, solution)


def _row_residuals(program, x, prefix):
    return np.array([
        abs(expr.evaluate(x)) for expr, label in program.equalities if label and label.startswith(prefix + "[")
    ])


@pytest.mark.unit
class TestPowerState:
    def test_initial(self, coupled_case):
        state = PowerState.initial(coupled_case)
        assert state.p_g.shape == (1, 1) and state.p_n.shape == (1, 1)
        assert state.nu[0, 0] == 1.0
        assert state.pf.shape == (1, 1)
        assert state.vector().size == 8

    def test_generation_cost(self, coupled_case):
        # a = 4, b = 50, c = 0 per period
        assert generation_cost(coupled_case, np.array([[0.5]])) == pytest.approx(4 * 0.25 + 25)

    def test_compressor_demand_without_compressors(self, coupled_case):
        assert compressor_demand_from(coupled_case, np.zeros((1, 0))).shape == (1, 0)

    def test_extract_rejects_non_optimal(self, coupled_case):
        program = build_opf(coupled_case)
        failed = ConicSolution(SolveStatus.INFEASIBLE, np.full(program.num_variables, np.nan), float("nan"))
        with pytest.raises(SubproblemError) as excinfo:
            extract_power_state(program, failed)
        assert excinfo.value.stage == "opf"
        assert excinfo.value.status == "infeasible"

    def test_compressor_demand_shape(self, coupled_case):
        with pytest.raises(ProgramError):
            build_opf(coupled_case, compressor_demand=np.zeros((1, 2)))


@pytest.mark.component
class TestBuildOpf:
    def test_zero_load(self, feeder_doc):
        case = case_from_dict(feeder_doc(0.0))
        _, _, state = _solve_opf(case)
        assert state.p_g[0, 0] == pytest.approx(0.0, abs=1e-7)
        np.testing.assert_allclose(state.nu, 1.0, atol=1e-7)
        np.testing.assert_allclose(state.pf, 0.0, atol=1e-7)
        np.testing.assert_allclose(state.current, 0.0, atol=1e-7)

    def test_matches_distflow(self, feeder_doc):
        case = case_from_dict(feeder_doc(0.1))
        program, solution, state = _solve_opf(case)
        _, _, current, nu, p_ref, q_ref = distflow_sweep(case, case.active_demand, case.reactive_demand)

        assert state.p_g[0, 0] == pytest.approx(p_ref[0], abs=1e-6)
        assert state.q_g[0, 0] == pytest.approx(q_ref[0], abs=1e-6)
        assert state.nu[0, 1] == pytest.approx(nu[0, 1], abs=1e-6)
        assert state.current[0, 0] == pytest.approx(current[0, 0], abs=1e-6)

        assert _row_residuals(program, solution.x, "P").max() <= 1e-6
        assert _row_residuals(program, solution.x, "Q").max() <= 1e-6
        assert _row_residuals(program, solution.x, "V").max() <= 1e-8

    def test_objective_monotone_in_load(self, feeder_doc):
        _, low, _ = _solve_opf(case_from_dict(feeder_doc(0.1)))
        _, high, _ = _solve_opf(case_from_dict(feeder_doc(0.2)))
        assert high.objective >= low.objective

    def test_consistent_context_keeps_optimum(self, coupled_case):
        _, base, x_bar = _solve_opf(coupled_case)
        system = assemble_coupling(coupled_case)

        # gas point that closes every coupling row at x_bar
        z = np.zeros(system.B.shape[1])
        target = system.c - system.A @ x_bar.vector()
        for r in range(system.rows):
            lo, hi = system.B.indptr[r], system.B.indptr[r + 1]
            col, coef = system.B.indices[lo], system.B.data[lo]
            z[col] = target[r] / coef
        np.testing.assert_allclose(system.residual(x_bar.vector(), z), 0.0, atol=1e-12)

        context = CouplingContext.for_power(system, z, np.zeros(system.rows), 100.0)
        _, coupled, x = _solve_opf(coupled_case, context)
        assert coupled.objective == pytest.approx(base.objective, rel=1e-6)
        assert x.p_n[0, 0] == pytest.approx(x_bar.p_n[0, 0], abs=1e-5)


@pytest.mark.component
class TestExactness:
    def test_zero_load(self, feeder_doc):
        _, _, state = _solve_opf(case_from_dict(feeder_doc(0.0)))
        report = check_soc_exactness(state, case_from_dict(feeder_doc(0.0)))
        assert report.max_gap <= 1e-6
        assert report.exact

    def test_loaded_feeder(self, feeder_doc):
        case = case_from_dict(feeder_doc(0.3))
        _, _, state = _solve_opf(case)
        report = check_soc_exactness(state, case)
        assert report.exact
        assert report.max_gap <= 1e-6

    def test_inflated_current_is_flagged(self, feeder_doc):
        case = case_from_dict(feeder_doc(0.3))
        _, _, state = _solve_opf(case)
        inflated = dataclasses.replace(state, current=state.current + 0.01)
        report = check_soc_exactness(inflated, case)
        assert not report.exact
        assert report.flagged[0][:2] == ("L1", 0)

    def test_no_lines(self, single_pipeline_case):
        _, _, state = _solve_opf(single_pipeline_case)
        report = check_soc_exactness(state, single_pipeline_case)
        assert report.gaps.shape == (1, 0)
        assert report.exact
