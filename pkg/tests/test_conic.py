import json
import math

import cvxpy as cp
import numpy as np
import pytest

from app.conic.backend import SolverOptions, SolveStatus, map_status, solve
from app.conic.expression import AffineExpr, Variable, as_expr
from app.conic.program import ConicProgram, dump_program
from app.errors import ProgramError


# ==============================
# Expressions
# ==============================
@pytest.mark.unit
class TestAffineExpr:
    def test_arithmetic(self):
        x, y = Variable(0, "x"), Variable(1, "y")
        e = (x + 2 * y - 3) * 2
        assert e.terms == {0: 2.0, 1: 4.0}
        assert e.constant == -6.0
        assert e.evaluate(np.array([1.0, 1.0])) == pytest.approx(0.0)
        assert (1 - x).evaluate(np.array([4.0, 0.0])) == pytest.approx(-3.0)
        assert (e / 2).constant == -3.0

    def test_numpy_scalars(self):
        x = Variable(0, "x")
        e = np.float64(3.0) * x + np.float64(1.0)
        assert isinstance(e, AffineExpr)
        assert e.evaluate(np.array([2.0])) == pytest.approx(7.0)

    def test_add_in_place_and_total(self):
        e = AffineExpr.var(2, 1.5)
        e.add_term(2, 0.5).add_term(3, 0.0)
        assert e.terms == {2: 2.0}
        total = AffineExpr.total([Variable(0, "a"), AffineExpr.var(0), 4.0])
        assert total.terms == {0: 2.0}
        assert total.constant == 4.0

    def test_constant(self):
        assert AffineExpr.const(2.0).is_constant()
        assert not AffineExpr.var(0).is_constant()

    def test_as_expr_rejects_strings(self):
        with pytest.raises(TypeError):
            as_expr("x")


# ==============================
# Program construction
# ==============================
@pytest.mark.unit
class TestConicProgram:
    def test_variable_registry(self):
        program = ConicProgram()
        x = program.add_variable("x", 0.0, 1.0)
        block = program.add_variable_block("b", (2, 3), lower=np.arange(3))
        assert x.index == 0
        assert block.start == 1 and block.size == 6
        assert block.index(1, 2) == 1 + 5
        assert program.variable("x").index == 0
        lower, upper = program.bounds()
        np.testing.assert_array_equal(lower, [0, 0, 1, 2, 0, 1, 2])
        assert math.isinf(upper[-1])

    def test_vector_fills_blocks(self):
        program = ConicProgram()
        program.add_variable("x")
        program.add_variable_block("b", (2,))
        np.testing.assert_array_equal(program.vector({"b": [3.0, 4.0]}), [0.0, 3.0, 4.0])

    def test_duplicate_name(self):
        program = ConicProgram()
        program.add_variable("x")
        with pytest.raises(ProgramError, match="duplicate"):
            program.add_variable_block("x", (2,))

    def test_inverted_and_nan_bounds(self):
        program = ConicProgram()
        with pytest.raises(ProgramError, match="inverted"):
            program.add_variable("x", 2.0, 1.0)
        with pytest.raises(ProgramError, match="NaN"):
            program.add_variable("y", float("nan"))

    def test_unknown_names(self):
        program = ConicProgram()
        with pytest.raises(ProgramError):
            program.block("missing")
        with pytest.raises(ProgramError):
            program.variable("missing")

    def test_empty_cone(self):
        program = ConicProgram()
        x = program.add_variable("x")
        with pytest.raises(ProgramError):
            program.add_soc(x, [])
        with pytest.raises(ProgramError):
            program.add_rotated(x, 1.0, [])

    def test_unregistered_index(self):
        program = ConicProgram()
        program.add_variable("x")
        with pytest.raises(ProgramError, match="unregistered"):
            program.add_equality(AffineExpr.var(5))

    def test_negative_square_weight(self):
        program = ConicProgram()
        x = program.add_variable("x")
        with pytest.raises(ProgramError):
            program.add_quadratic_objective(x, -1.0)

    def test_rotated_cone_as_plain(self):
        program = ConicProgram()
        u, x = program.add_variable("u"), program.add_variable("x")
        cid = program.add_rotated(u, 1.0, [x])
        # x^2 <= u: holds at (u, x) = (4, 2), violated at (3, 2)
        assert program.cone_residual(cid, np.array([4.0, 2.0])) == pytest.approx(0.0, abs=1e-12)
        assert program.cone_residual(cid, np.array([3.0, 2.0])) < 0

    def test_standard_form_is_deterministic(self):
        def build():
            program = ConicProgram()
            x, y = program.add_variable("x", 0.0), program.add_variable("y")
            program.add_equality(x + y, 1.0)
            program.add_inequality(x - 2 * y, 0.5)
            program.add_soc(x + 3, [y, x])
            program.add_rotated(x, y, [x + y])
            program.add_quadratic_objective(x - 1, 2.0)
            return program.to_standard_form()

        a, b = build(), build()
        assert (a.A_eq != b.A_eq).nnz == 0
        assert (a.G != b.G).nnz == 0
        np.testing.assert_array_equal(a.b_eq, [1.0])
        np.testing.assert_array_equal(a.h, [0.5])
        assert [g.dim for g in a.cone_groups] == [3]
        assert a.cone_groups[0].cone_ids == [0, 1]

    def test_summary_counts(self):
        program = ConicProgram("p")
        x = program.add_variable("x")
        program.add_equality(x, 1.0)
        assert "1 variables, 1 equalities" in program.summary()


# ==============================
# Backend
# ==============================
@pytest.mark.unit
class TestSolve:
    def test_linear(self):
        program = ConicProgram()
        x = program.add_variable("x", 1.0, 5.0)
        program.add_linear_objective(x)
        solution = solve(program)
        assert solution.status == SolveStatus.OPTIMAL
        assert solution.value(x) == pytest.approx(1.0, abs=1e-7)

    def test_second_order_cone(self):
        program = ConicProgram()
        t = program.add_variable("t")
        program.add_soc(t, [AffineExpr.const(3.0), AffineExpr.const(4.0)])
        program.add_linear_objective(t)
        solution = solve(program)
        assert solution.objective == pytest.approx(5.0, rel=1e-7)

    def test_rotated_cone(self):
        program = ConicProgram()
        u, x = program.add_variable("u"), program.add_variable("x")
        program.add_equality(x, 2.0)
        program.add_rotated(u, 1.0, [x])
        program.add_linear_objective(u)
        solution = solve(program)
        assert solution.value(u) == pytest.approx(4.0, rel=1e-7)

    @pytest.mark.parametrize("epigraph", [False, True])
    def test_quadratic_objective_forms_agree(self, epigraph):
        program = ConicProgram()
        x = program.add_variable("x", -10.0, 10.0)
        program.add_quadratic_objective(x - 3.0, 2.0)
        program.add_linear_objective(x)
        solution = solve(program, SolverOptions(quadratic_epigraph=epigraph))
        # 2 (x-3)^2 + x is minimal at x = 2.75
        assert solution.value(x) == pytest.approx(2.75, abs=1e-6)
        assert solution.objective == pytest.approx(2 * 0.25 ** 2 + 2.75, abs=1e-6)

    def test_infeasible(self):
        program = ConicProgram()
        x = program.add_variable("x", 0.0, 1.0)
        program.add_equality(x, 2.0)
        program.add_linear_objective(x)
        solution = solve(program)
        assert solution.status == SolveStatus.INFEASIBLE
        assert not solution.optimal

    def test_backend_failure_is_a_status(self, monkeypatch):
        def boom(self, *args, **kwargs):
            raise cp.error.SolverError("boom")

        monkeypatch.setattr(cp.Problem, "solve", boom)
        program = ConicProgram()
        x = program.add_variable("x", 0.0, 1.0)
        program.add_linear_objective(x)
        solution = solve(program)
        assert solution.status == SolveStatus.NUMERICAL_FAILURE
        assert np.isnan(solution.x).all()

    def test_empty_program(self):
        assert solve(ConicProgram()).optimal

    def test_options_validation(self):
        with pytest.raises(ProgramError):
            SolverOptions(feasibility_tol=0.0)
        with pytest.raises(ProgramError):
            SolverOptions(max_iter=0)
        assert SolverOptions(solver="clarabel").solver == "CLARABEL"
        assert "tol_feas" in SolverOptions().backend_kwargs()

    @pytest.mark.parametrize("raw, expected", [
        (cp.OPTIMAL_INACCURATE, SolveStatus.OPTIMAL),
        (cp.INFEASIBLE_INACCURATE, SolveStatus.INFEASIBLE),
        (cp.UNBOUNDED_INACCURATE, SolveStatus.UNBOUNDED),
    ])
    def test_inaccurate_status_warns(self, caplog, raw, expected):
        assert map_status(raw, "CLARABEL") == expected
        assert "⚠️ CLARABEL returned" in caplog.text

    def test_exact_status_is_silent(self, caplog):
        assert map_status(cp.OPTIMAL) == SolveStatus.OPTIMAL
        assert map_status("solver_error") == SolveStatus.NUMERICAL_FAILURE
        assert caplog.text == ""


@pytest.mark.unit
def test_dump_program(tmp_path):
    program = ConicProgram("dumped")
    x = program.add_variable("x", 0.0)
    block = program.add_variable_block("b", (1, 2))
    program.add_equality(x + block.expr(0, 1), 1.0, label="E")
    program.add_rotated(x, 1.0, [block.expr(0, 0)], label="R")
    program.add_quadratic_objective(x, 0.5)

    path = dump_program(program, str(tmp_path / "program.json"))
    with open(path) as fh:
        doc = json.load(fh)
    assert doc["format"] == "ogpf-conic-program"
    assert [v["name"] for v in doc["variables"]] == ["x", "b[0,0]", "b[0,1]"]
    assert doc["variables"][0]["lower"] == 0.0 and doc["variables"][0]["upper"] is None
    assert doc["equalities"][0]["label"] == "E"
    assert doc["equalities"][0]["expr"]["constant"] == -1.0
    assert doc["cones"][0]["kind"] == "rotated"
    assert doc["objective"]["squares"][0]["weight"] == 0.5
