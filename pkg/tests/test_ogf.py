import math

import numpy as np
import pytest

from app.conic.backend import solve
from app.conic.program import ConicProgram
from app.errors import ProgramError, SubproblemError
from app.model.case_loader import case_from_dict, serialize_case
from app.ogf.gas_model import GasState, GasVariables, build_gas_constraints, dg_offtake_from, extract_gas_state
from app.ogf.relaxation import solve_relaxation
from app.ogf.ssa import SsaParams, SsaState, build_ssa_subproblem, concave_gap, linearize_concave, run_ssa

ROOT3 = math.sqrt(3.0)


def _add_gas_compressor(fuel_model):
    def edit(doc):
        gas = doc["gas"]
        gas["fuel_model"] = fuel_model
        gas["nodes"].append({"id": "N3", "pressure_min_bar": 1.0, "pressure_max_bar": 2.0})
        gas["compressors"] = [{
            "id": "C1", "from": "N2", "to": "N3", "ratio": 1.5,
            "y_max_ksm3h": 5.0, "alpha": 0.04, "drive": "gas",
        }]
        gas["loads"].append({"id": "GL3", "node": "N3", "flow_ksm3h": 0.48, "profile": "flat"})
    return edit


# ==============================
# Building blocks
# ==============================
@pytest.mark.unit
class TestGasModel:
    def test_unknown_mode(self, single_pipeline_case):
        with pytest.raises(ProgramError, match="unknown gas mode"):
            build_gas_constraints(single_pipeline_case, ConicProgram(), "exact")

    def test_offtake_shape(self, coupled_case):
        with pytest.raises(ProgramError, match="offtake"):
            build_gas_constraints(coupled_case, ConicProgram(), "ssa", dg_offtake=np.zeros((2, 1)))

    def test_layout_matches_state_vector(self, coupled_case):
        program = ConicProgram()
        gv = GasVariables.register(program, coupled_case)
        assert gv.size == GasState.zeros(coupled_case).vector().size
        assert gv.offset == 0

    def test_dg_offtake(self, coupled_case):
        np.testing.assert_allclose(dg_offtake_from(coupled_case, np.array([[0.2]])), [[0.05]])

    def test_weymouth_residual(self, single_pipeline_case):
        state = GasState.zeros(single_pipeline_case)
        state.y_in[:] = ROOT3
        state.y_out[:] = ROOT3
        state.u[:] = [[2.0, 1.0]]
        assert state.weymouth_residual(single_pipeline_case).max() == pytest.approx(0.0, abs=1e-12)
        state.u[:] = [[2.0, 1.5]]
        # lhs 3, rhs 1.75
        assert state.weymouth_residual(single_pipeline_case)[0, 0] == pytest.approx(1.25 / 1.75)

    def test_linearization_is_tight_at_its_point(self, single_pipeline_case):
        program = ConicProgram()
        gv = GasVariables.register(program, single_pipeline_case)
        point = GasState.zeros(single_pipeline_case)
        point.y_in[:], point.y_out[:], point.u[:] = 1.0, 0.5, [[1.8, 1.2]]

        expr = linearize_concave(point, single_pipeline_case, 0, 0, gv)
        x = program.vector(point.as_blocks())
        assert expr.evaluate(x) == pytest.approx(1.5 ** 2 / 4 + 1.2 ** 2)

        gap = concave_gap(single_pipeline_case, point, point)
        assert gap[0, 0] == pytest.approx(1.8 ** 2 - 1.5 ** 2 / 4 - 1.2 ** 2)

    def test_linearization_underestimates(self, single_pipeline_case):
        base = GasState.zeros(single_pipeline_case)
        base.y_in[:], base.y_out[:], base.u[:] = 1.0, 1.0, [[1.6, 1.1]]
        point = GasState.zeros(single_pipeline_case)
        point.y_in[:], point.y_out[:], point.u[:] = 1.5, 1.2, [[1.9, 1.3]]
        # convex function above its tangent: gap at base >= exact gap
        exact = 1.9 ** 2 - 2.7 ** 2 / 4 - 1.3 ** 2
        assert concave_gap(single_pipeline_case, point, base)[0, 0] >= exact

    def test_linearization_at_zero_point_vanishes(self, single_pipeline_case):
        program = ConicProgram()
        gv = GasVariables.register(program, single_pipeline_case)
        expr = linearize_concave(GasState.zeros(single_pipeline_case), single_pipeline_case, 0, 0, gv)
        assert expr.constant == 0.0
        assert all(coef == 0.0 for coef in expr.terms.values())
        x = np.random.default_rng(7).uniform(0.0, 3.0, program.num_variables)
        assert expr.evaluate(x) == 0.0


@pytest.mark.unit
class TestSsaParams:
    @pytest.mark.parametrize("kwargs", [
        {"delta": -1.0},
        {"rho0": 10.0, "rho_max": 1.0},
        {"kappa": 0.5},
        {"max_iter": 0},
        {"warm_start": "cold"},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ProgramError):
            SsaParams(**kwargs)

    def test_defaults(self):
        params = SsaParams()
        assert params.rho0 <= params.rho_max
        assert params.warm_start == "relaxation"


# ==============================
# Solves
# ==============================
@pytest.mark.component
class TestSinglePipeline:
    def test_relaxation_hits_pressure_limit(self, single_pipeline_case):
        result = solve_relaxation(single_pipeline_case)
        assert result.gas.y_in[0, 0] == pytest.approx(ROOT3, rel=1e-5)
        assert result.solution.objective == pytest.approx(10 * ROOT3 + 100 * (3 - ROOT3), rel=1e-6)

    def test_ssa_from_relaxation(self, single_pipeline_case):
        relaxed = solve_relaxation(single_pipeline_case)
        result = run_ssa(single_pipeline_case)

        assert result.converged
        assert result.gas.y_in[0, 0] == pytest.approx(ROOT3, rel=1e-5)
        assert result.gas.u[0].tolist() == pytest.approx([2.0, 1.0], abs=1e-5)
        assert result.gas.weymouth_residual(single_pipeline_case).max() <= 1e-6
        assert relaxed.solution.objective <= result.gas.purchase_cost(single_pipeline_case) + 1e-6

    def test_ssa_from_zero(self, single_pipeline_case):
        relaxed = solve_relaxation(single_pipeline_case)
        result = run_ssa(single_pipeline_case, params=SsaParams(warm_start="zero"))

        assert result.converged
        assert result.gas.purchase_cost(single_pipeline_case) >= relaxed.solution.objective - 1e-6
        assert result.gas.weymouth_residual(single_pipeline_case).max() <= 1e-6

    def test_trace(self, single_pipeline_case):
        result = run_ssa(single_pipeline_case, params=SsaParams(warm_start="zero"))
        frame = result.state.trace_frame()
        assert len(frame) == result.state.iteration
        assert list(frame["j"]) == list(range(len(frame)))
        # penalty grows by kappa until capped
        assert result.state.rho_history[1] == pytest.approx(2 * result.state.rho_history[0])

    def test_iteration_limit(self, single_pipeline_case):
        params = SsaParams(warm_start="zero", max_iter=1, delta=0.0, epsilon=0.0)
        result = run_ssa(single_pipeline_case, params=params)
        assert not result.converged
        assert result.state.iteration == 1


@pytest.mark.component
class TestSsaSubproblem:
    @staticmethod
    def _exact_point(case):
        point = GasState.zeros(case)
        point.y_in[:], point.y_out[:], point.u[:] = ROOT3, ROOT3, [[2.0, 1.0]]
        point.y_w[:] = [[ROOT3, 3.0 - ROOT3]]
        return point

    def test_max_penalty_at_feasible_point(self, single_pipeline_case):
        params = SsaParams()
        state = SsaState(params=params, point=self._exact_point(single_pipeline_case), rho=params.rho_max)
        program = build_ssa_subproblem(single_pipeline_case, state)
        solution = solve(program)

        assert solution.optimal
        assert program.block("slack").values(solution.x).max() <= params.slack_floor
        gas = extract_gas_state(program, solution)
        assert gas.y_in[0, 0] == pytest.approx(ROOT3, rel=1e-5)

    def test_zero_penalty_is_the_relaxation(self, single_pipeline_case):
        state = SsaState(params=SsaParams(rho0=0.0), point=GasState.zeros(single_pipeline_case), rho=0.0)
        program = build_ssa_subproblem(single_pipeline_case, state)
        solution = solve(program)

        assert solution.optimal
        # free slacks leave only the convex cone
        assert solution.objective == pytest.approx(solve_relaxation(single_pipeline_case).solution.objective, rel=1e-6)


@pytest.mark.component
class TestInfeasibleDemand:
    @staticmethod
    def _overloaded(doc):
        doc["gas"]["loads"][0]["flow_ksm3h"] = 25.0

    def test_relaxation(self, make_case):
        case = make_case("single_pipeline", self._overloaded)
        with pytest.raises(SubproblemError) as excinfo:
            solve_relaxation(case)
        assert excinfo.value.stage == "relaxation"

    def test_ssa(self, make_case):
        case = make_case("single_pipeline", self._overloaded)
        with pytest.raises(SubproblemError) as excinfo:
            run_ssa(case, initial=GasState.zeros(case))
        assert excinfo.value.stage == "ssa"
        assert excinfo.value.iteration == 0


@pytest.mark.component
class TestCompressorFuel:
    @pytest.mark.parametrize("fuel_model, expected_in", [("consistent", 0.5), ("inflow_scaled", 0.48 * 0.96)])
    def test_gas_driven(self, make_case, fuel_model, expected_in):
        case = make_case("single_pipeline", _add_gas_compressor(fuel_model))
        gas = solve_relaxation(case).gas
        assert gas.yc_out[0, 0] == pytest.approx(0.48, abs=1e-6)
        assert gas.yc_in[0, 0] == pytest.approx(expected_in, abs=1e-6)


@pytest.mark.component
class TestLinepack:
    def test_conservation_and_terminal_rule(self, case13):
        case = case13.truncated(4)
        gas = solve_relaxation(case).gas
        m0 = np.array([p.initial_linepack for p in case.gas.pipelines])

        np.testing.assert_allclose(np.sum(gas.y_in - gas.y_out, axis=0), gas.m[-1] - m0, atol=1e-6)
        if case.horizon.terminal_rule == "equal-to-initial":
            np.testing.assert_allclose(gas.m[-1], m0, atol=1e-6)

    def test_electric_compressors_conserve_gas(self, case13):
        gas = solve_relaxation(case13.truncated(2)).gas
        np.testing.assert_allclose(gas.yc_in, gas.yc_out, atol=1e-6)

    def test_steady_start_meets_terminal_rule(self, case13):
        case = case13.truncated(4)
        result = run_ssa(case)
        assert result.converged
        assert result.gas.weymouth_residual(case).max() <= 1e-6
        np.testing.assert_allclose(result.gas.m[-1], [p.initial_linepack for p in case.gas.pipelines], atol=1e-6)

    def test_midpoint_start_blocks_terminal_rule(self, case13):
        doc = serialize_case(case13)
        doc["horizon"]["initial_linepack"] = "midpoint"
        for pipe in doc["gas"]["pipelines"]:
            del pipe["initial_linepack_ksm3"]
        case = case_from_dict(doc).truncated(4)
        # P1 and P2 both end at u_head + u_tail = 7: one pressure along N2-N4 and no flow to N4 under the exact cone
        with pytest.raises(SubproblemError) as excinfo:
            run_ssa(case)
        assert excinfo.value.stage == "ssa"
        # the pressure-square proxy still admits flow, so the warm start solves
        assert solve_relaxation(case).solution.objective > 0
