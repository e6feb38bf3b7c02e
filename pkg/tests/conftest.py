import copy
import os

import pytest

from app.model.case_loader import case_from_dict, load_case

CASES_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "cases")

# Unit bases throughout: per-unit values equal file values (Z_base = 1 ohm).
UNIT_BASES = {"power_mva": 1.0, "voltage_kv": 1.0, "pressure_bar": 1.0, "gas_flow_ksm3h": 1.0}

TINY_LINEPACK = 1e-9


def _coupled_doc() -> dict:
    """2 buses / 2 gas nodes, one gas-fired DG fed from the pipeline's tail.

    The pipeline caps the flow at sqrt(2.5 * (1.1^2 - 0.9^2)) = 1.0, so the
    gas-fired DG can take at most 0.05 of gas (0.2 MW) on top of the 0.95 load.
    """
    return {
        "name": "tiny-coupled",
        "bases": dict(UNIT_BASES),
        "horizon": {
            "periods": 1,
            "duration_h": 1.0,
            "profiles": {"flat": [1.0]},
            "prices": {"cheap": [10.0], "dear": [20.0]},
        },
        "power": {
            "reference_bus": "B1",
            "buses": [
                {"id": "B1", "v_min": 0.95, "v_max": 1.05},
                {"id": "B2", "v_min": 0.9, "v_max": 1.1},
            ],
            "lines": [{"id": "L1", "from": "B1", "to": "B2", "r_ohm": 0.01, "x_ohm": 0.01}],
            "generators": [
                {"id": "DG1", "bus": "B1", "p_max_mw": 2.0, "q_min_mvar": -1.0, "q_max_mvar": 1.0,
                 "cost": {"a": 4.0, "b": 50.0, "c": 0.0}},
            ],
            "gas_generators": [{"id": "G1", "bus": "B2", "p_max_mw": 0.4, "beta_mwh_per_ksm3": 4.0}],
            "loads": [{"id": "D2", "bus": "B2", "p_mw": 0.5, "q_mvar": 0.1, "profile": "flat"}],
        },
        "gas": {
            "nodes": [
                {"id": "N1", "pressure_min_bar": 1.0, "pressure_max_bar": 1.1},
                {"id": "N2", "pressure_min_bar": 0.9, "pressure_max_bar": 1.1},
            ],
            "pipelines": [{"id": "P1", "from": "N1", "to": "N2", "phi": 2.5, "linepack_k": TINY_LINEPACK}],
            "retailers": [{"id": "W1", "node": "N1", "y_max_ksm3h": 2.0, "price": "cheap"}],
            "loads": [{"id": "GL2", "node": "N2", "flow_ksm3h": 0.95, "profile": "flat"}],
        },
        "coupling": {"gas_generators": {"G1": "N2"}},
    }


def _single_pipeline_doc() -> dict:
    """One pipeline with phi = 1 between a cheap supply (pressure <= 2) and an
    expensive one (pressure >= 1) serving a load of 3: optimum flow is sqrt(3)."""
    return {
        "name": "single-pipeline",
        "bases": dict(UNIT_BASES),
        "horizon": {
            "periods": 1,
            "profiles": {"flat": [1.0]},
            "prices": {"cheap": [10.0], "dear": [100.0]},
        },
        "power": {
            "reference_bus": "B1",
            "buses": [{"id": "B1"}],
            "lines": [],
            "generators": [{"id": "DG1", "bus": "B1", "p_max_mw": 1.0}],
        },
        "gas": {
            "nodes": [
                {"id": "N1", "pressure_min_bar": 1.5, "pressure_max_bar": 2.0},
                {"id": "N2", "pressure_min_bar": 1.0, "pressure_max_bar": 1.5},
            ],
            "pipelines": [{"id": "P1", "from": "N1", "to": "N2", "phi": 1.0, "linepack_k": TINY_LINEPACK}],
            "retailers": [
                {"id": "W1", "node": "N1", "y_max_ksm3h": 10.0, "price": "cheap"},
                {"id": "W2", "node": "N2", "y_max_ksm3h": 10.0, "price": "dear"},
            ],
            "loads": [{"id": "GL2", "node": "N2", "flow_ksm3h": 3.0, "profile": "flat"}],
        },
        "coupling": {},
    }


def _feeder_doc(load_mw: float = 0.1) -> dict:
    """2-bus feeder, r = x = 0.01 pu, one DG at the reference bus; trivial gas side."""
    return {
        "name": "feeder",
        "bases": dict(UNIT_BASES),
        "horizon": {"periods": 1, "profiles": {"flat": [1.0]}, "prices": {"cheap": [10.0]}},
        "power": {
            "reference_bus": "B1",
            "buses": [{"id": "B1"}, {"id": "B2", "v_min": 0.9, "v_max": 1.1}],
            "lines": [{"id": "L1", "from": "B1", "to": "B2", "r_ohm": 0.01, "x_ohm": 0.01}],
            "generators": [
                {"id": "DG1", "bus": "B1", "p_max_mw": 1.0, "q_min_mvar": -1.0, "q_max_mvar": 1.0,
                 "cost": {"a": 1.0, "b": 20.0}},
            ],
            "loads": [{"id": "D2", "bus": "B2", "p_mw": load_mw, "q_mvar": load_mw / 2, "profile": "flat"}],
        },
        "gas": {
            "nodes": [{"id": "N1", "pressure_min_bar": 1.0, "pressure_max_bar": 2.0}],
            "pipelines": [],
            "retailers": [{"id": "W1", "node": "N1", "y_max_ksm3h": 1.0, "price": "cheap"}],
        },
        "coupling": {},
    }


# ==============================
# Fixtures
# ==============================
@pytest.fixture
def coupled_doc():
    return _coupled_doc()


@pytest.fixture
def coupled_case():
    return case_from_dict(_coupled_doc())


@pytest.fixture
def single_pipeline_case():
    return case_from_dict(_single_pipeline_doc())


@pytest.fixture
def single_pipeline_doc():
    return _single_pipeline_doc()


@pytest.fixture
def feeder_doc():
    return _feeder_doc


@pytest.fixture
def make_case():
    """Build a case from one of the tiny documents after applying ``edit`` to a deep copy."""
    docs = {"coupled": _coupled_doc, "single_pipeline": _single_pipeline_doc, "feeder": _feeder_doc}

    def _make(kind: str, edit=None, validate: bool = True):
        doc = copy.deepcopy(docs[kind]())
        if edit is not None:
            edit(doc)
        return case_from_dict(doc, validate=validate)

    return _make


@pytest.fixture(scope="session")
def case13():
    return load_case(os.path.join(CASES_DIR, "power13_gas7.json"))


@pytest.fixture(scope="session")
def case123():
    return load_case(os.path.join(CASES_DIR, "power123_gas20.json"))
