import math

import numpy as np
import pytest

from app.admm.centralized import solve_centralized
from app.errors import CaseTopologyError, OracleError, PressureInfeasibleError
from app.ogf.ssa import SsaParams
from app.oracle.brute_force import brute_force_optimum
from app.oracle.feasibility import FAMILIES, feasibility_report
from app.oracle.forward import gas_forward_solve, merit_order_supplies, screen_gas_network

ROOT3 = math.sqrt(3.0)


def _with_gas_compressor(doc):
    gas = doc["gas"]
    gas["fuel_model"] = "consistent"
    gas["nodes"].append({"id": "N3", "pressure_min_bar": 1.0, "pressure_max_bar": 2.0})
    gas["compressors"] = [{
        "id": "C1", "from": "N2", "to": "N3", "ratio": 1.5,
        "y_max_ksm3h": 5.0, "alpha": 0.04, "drive": "gas",
    }]
    gas["loads"].append({"id": "GL3", "node": "N3", "flow_ksm3h": 0.48, "profile": "flat"})


def _two_retailers(doc):
    doc["gas"]["retailers"] = [
        {"id": "W1", "node": "N1", "y_max_ksm3h": 0.6, "price": "cheap"},
        {"id": "W2", "node": "N1", "y_max_ksm3h": 2.0, "price": "dear"},
    ]


def _three_node_chain(doc):
    doc["horizon"]["periods"] = 2
    doc["horizon"]["profiles"]["flat"] = [1.0, 0.8]
    doc["horizon"]["prices"] = {"cheap": [10.0, 12.0], "dear": [20.0, 20.0]}
    gas = doc["gas"]
    gas["nodes"] = [
        {"id": "N1", "pressure_min_bar": 1.0, "pressure_max_bar": 1.1},
        {"id": "N2", "pressure_min_bar": 0.9, "pressure_max_bar": 1.1},
        {"id": "N3", "pressure_min_bar": 0.8, "pressure_max_bar": 1.1},
    ]
    gas["pipelines"] = [
        {"id": "P1", "from": "N1", "to": "N2", "phi": 2.5, "linepack_k": 1e-9},
        {"id": "P2", "from": "N2", "to": "N3", "phi": 2.5, "linepack_k": 1e-9},
    ]
    gas["loads"] = [
        {"id": "GL2", "node": "N2", "flow_ksm3h": 0.3, "profile": "flat"},
        {"id": "GL3", "node": "N3", "flow_ksm3h": 0.5, "profile": "flat"},
    ]
    doc["coupling"]["gas_generators"] = {"G1": "N3"}


def _reactive_support(doc):
    # B2 only holds its voltage floor when G1 injects reactive power
    power = doc["power"]
    power["buses"][0].update(v_min=0.9999, v_max=1.0001)
    power["buses"][1]["v_min"] = 0.999
    power["gas_generators"][0].update(q_min_mvar=-1.0, q_max_mvar=1.0)


# ==============================
# Forward solve
# ==============================
@pytest.mark.unit
class TestForwardSolve:
    def test_single_pipeline(self, single_pipeline_case):
        state = gas_forward_solve(single_pipeline_case.gas, {"N2": ROOT3}, "N1", 2.0)
        assert state.u[0].tolist() == pytest.approx([2.0, 1.0])
        assert state.y_in[0, 0] == pytest.approx(ROOT3)
        # the root's first retailer balances
        assert state.y_w[0].tolist() == pytest.approx([ROOT3, 0.0])
        assert state.weymouth_residual(single_pipeline_case).max() == pytest.approx(0.0, abs=1e-12)

    def test_pressure_infeasible(self, single_pipeline_case):
        with pytest.raises(PressureInfeasibleError, match="P1"):
            gas_forward_solve(single_pipeline_case.gas, {"N2": 3.0}, "N1", 2.0)

    def test_reverse_flow(self, single_pipeline_case):
        with pytest.raises(OracleError, match="reverse flow"):
            gas_forward_solve(single_pipeline_case.gas, {"N2": -1.0}, "N1", 2.0)

    def test_not_a_tree(self, make_case):
        def parallel(doc):
            doc["gas"]["pipelines"].append({"id": "P2", "from": "N1", "to": "N2", "phi": 1.0, "linepack_k": 1e-9})

        case = make_case("single_pipeline", parallel, validate=False)
        with pytest.raises(CaseTopologyError):
            gas_forward_solve(case.gas, {"N2": 1.0}, "N1", 2.0)

    def test_bad_inputs(self, single_pipeline_case):
        gas = single_pipeline_case.gas
        with pytest.raises(OracleError, match="unknown root"):
            gas_forward_solve(gas, {"N2": 1.0}, "N9", 2.0)
        with pytest.raises(OracleError, match="unknown node"):
            gas_forward_solve(gas, {"N9": 1.0}, "N1", 2.0)
        with pytest.raises(OracleError, match="one entry per node"):
            gas_forward_solve(gas, [1.0], "N1", 2.0)
        with pytest.raises(OracleError, match="imbalance"):
            gas_forward_solve(gas, {"N2": 1.0}, "N1", 2.0, supplies=[0.5, 0.0])

    def test_compressor_to_bounds(self, make_case):
        case = make_case("single_pipeline", _with_gas_compressor)
        state = gas_forward_solve(case.gas, {"N2": 1.0, "N3": 0.48}, "N1", 2.0, compress_to_bounds=True)
        # consistent fuel: y_in = 0.48 / 0.96
        assert state.yc_in[0, 0] == pytest.approx(0.5)
        assert state.yc_out[0, 0] == pytest.approx(0.48)
        assert state.y_in[0, 0] == pytest.approx(1.5)
        u2 = math.sqrt(4.0 - 1.5 ** 2)
        assert state.u[0].tolist() == pytest.approx([2.0, u2, 1.5 * u2])

    def test_compressor_ratio_limit(self, make_case):
        case = make_case("single_pipeline", _with_gas_compressor)
        with pytest.raises(OracleError, match="ratio"):
            gas_forward_solve(case.gas, {"N2": 1.0, "N3": 0.48}, "N1", 2.0, boosts={"C1": 2.0})


@pytest.mark.unit
class TestMeritOrder:
    def test_fills_cheapest_first(self, single_pipeline_case):
        assert merit_order_supplies(single_pipeline_case, 12.0, 0).tolist() == pytest.approx([10.0, 2.0])

    def test_short(self, single_pipeline_case):
        with pytest.raises(OracleError, match="cannot cover"):
            merit_order_supplies(single_pipeline_case, 25.0, 0)

    def test_screen(self, coupled_case):
        state = screen_gas_network(coupled_case)
        # load 0.95 plus the DG at full output, 0.4 / 4
        assert state.y_w[0, 0] == pytest.approx(1.05)
        assert state.u[0, 0] == pytest.approx(1.1)
        assert state.u[0, 1] == pytest.approx(math.sqrt(1.21 - 1.05 ** 2 / 2.5))


# ==============================
# Brute force
# ==============================
@pytest.mark.unit
class TestBruteForceShape:
    def test_retailers_on_several_nodes(self, single_pipeline_case):
        with pytest.raises(OracleError, match="root node"):
            brute_force_optimum(single_pipeline_case)

    def test_resolution(self, coupled_case):
        with pytest.raises(OracleError, match="resolution"):
            brute_force_optimum(coupled_case, resolution=0.0)

    def test_grid_limit(self, coupled_case):
        with pytest.raises(OracleError, match="limit"):
            brute_force_optimum(coupled_case, resolution=1e-4, max_points=10)


@pytest.mark.component
class TestBruteForceAgreement:
    @pytest.mark.parametrize("edit, resolution", [
        (None, 1e-4),
        (_two_retailers, 1e-3),
        (_three_node_chain, 1e-4),
    ], ids=["base", "two-retailers", "three-node-chain"])
    def test_matches_centralized(self, make_case, edit, resolution):
        case = make_case("coupled", edit)
        oracle = brute_force_optimum(case, resolution=resolution)
        result = solve_centralized(case, SsaParams(delta=1e-6))

        assert result.converged
        assert result.objective == pytest.approx(oracle.objective, rel=1e-3)
        assert oracle.power.p_n.shape == (case.periods, 1)
        assert oracle.gas.u.shape == (case.periods, len(case.gas.nodes))

    def test_base_optimum(self, coupled_case):
        oracle = brute_force_optimum(coupled_case, resolution=1e-4)
        assert oracle.power.p_n[0, 0] == pytest.approx(0.2, abs=1e-4)
        assert oracle.grid_points == 4001

    def test_reactive_support(self, make_case):
        case = make_case("coupled", _reactive_support)
        oracle = brute_force_optimum(case, resolution=1e-3, reactive_points=201)
        result = solve_centralized(case, SsaParams(delta=1e-6))

        assert oracle.grid_points == 401 * 201
        # B2's floor needs roughly 0.3 Mvar from G1
        assert oracle.power.q_n[0, 0] > 0.25
        assert result.converged
        assert result.objective == pytest.approx(oracle.objective, rel=1e-3)

    def test_reactive_points(self, coupled_case):
        with pytest.raises(OracleError, match="reactive_points"):
            brute_force_optimum(coupled_case, reactive_points=0)


# ==============================
# Feasibility report
# ==============================
@pytest.mark.unit
class TestFeasibilityReport:
    @pytest.fixture
    def exact_state(self, single_pipeline_case):
        return gas_forward_solve(single_pipeline_case.gas, {"N2": 3.0}, "N1", 2.0, supplies=[ROOT3, 3.0 - ROOT3])

    def test_exact_state_is_clean(self, single_pipeline_case, exact_state):
        report = feasibility_report(single_pipeline_case, None, exact_state)
        assert report.violation_free(1e-6)
        assert report.families["weymouth"].rows == 2  # direction row + Weymouth row

    def test_pressure_perturbation(self, single_pipeline_case, exact_state):
        exact_state.u[0, 1] = 1.2
        report = feasibility_report(single_pipeline_case, None, exact_state)
        weymouth = report.families["weymouth"]
        assert weymouth.macv == pytest.approx(3.0 - (4.0 - 1.44))
        assert weymouth.worst == "W[P1,0]"
        assert not report.violation_free(1e-6)
        assert report.violation_free(1e-6, families=["bounds", "balance"])

    def test_bound_violation(self, single_pipeline_case, exact_state):
        exact_state.y_w[0, 0] = 12.0
        report = feasibility_report(single_pipeline_case, None, exact_state)
        assert report.families["bounds"].macv == pytest.approx(2.0)
        assert report.families["bounds"].worst == "y_w"

    def test_output_forms(self, single_pipeline_case, exact_state):
        report = feasibility_report(single_pipeline_case, None, exact_state)
        frame = report.to_frame()
        assert list(frame.columns) == ["family", "rows", "macv_pu", "mrcv", "worst_row"]
        assert list(frame["family"]) == list(FAMILIES)
        text = report.to_text()
        assert "MACV" in text and "MRCV" in text

    @pytest.mark.component
    def test_joint_solution(self, coupled_case):
        result = solve_centralized(coupled_case)
        report = feasibility_report(coupled_case, result.power, result.gas)
        assert report.families["coupling"].rows == 1
        assert report.violation_free(1e-5)
