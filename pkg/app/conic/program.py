# app/conic/program.py
"""Convex programs in a standard conic form.

A ``ConicProgram`` holds box-bounded variables, a linear + sum-of-squares
objective, linear equality / inequality rows and second-order cones (plain and
rotated). ``to_standard_form`` turns it into sparse matrices in insertion order,
so identical build sequences give identical matrices.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from app.conic.expression import AffineExpr, Variable, as_expr
from app.errors import ProgramError


# ==============================
# Variable blocks
# ==============================
@dataclass(frozen=True)
class VariableBlock:
    """Contiguous, row-major block of variables (e.g. one value per period x device)."""

    name: str
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def index(self, *idx: int) -> int:
        flat = 0
        for i, n in zip(idx, self.shape):
            flat = flat * n + int(i)
        return self.start + flat

    def expr(self, *idx: int, coef: float = 1.0) -> AffineExpr:
        return AffineExpr.var(self.index(*idx), coef)

    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size).reshape(self.shape)

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x[self.start:self.start + self.size], dtype=float).reshape(self.shape)

    def assign(self, x: np.ndarray, values) -> None:
        x[self.start:self.start + self.size] = np.broadcast_to(np.asarray(values, dtype=float), self.shape).ravel()


@dataclass
class Cone:
    kind: str  # "soc" or "rotated"
    exprs: list[AffineExpr]  # soc: (t, x1..xk); rotated: (u, v, x1..xk)
    label: str | None = None

    def as_plain(self) -> list[AffineExpr]:
        """(t, x1..xk) of the equivalent plain cone; rotated ||x||^2 <= u v becomes ||(2x, u-v)|| <= u+v."""
        if self.kind == "soc":
            return self.exprs
        u, v, *xs = self.exprs
        return [u + v, *(x * 2.0 for x in xs), u - v]


# ==============================
# Standard form
# ==============================
@dataclass
class ConeGroup:
    """All cones of one dimension, stacked: ``heads @ x + head_const`` are the t's,
    ``tails[j] @ x + tail_const[j]`` the j-th components."""

    dim: int
    cone_ids: list[int]
    heads: sp.csr_matrix
    head_const: np.ndarray
    tails: list[sp.csr_matrix]
    tail_const: list[np.ndarray]


@dataclass
class StandardForm:
    n: int
    c: np.ndarray
    objective_constant: float
    F: sp.csr_matrix  # objective += sum_i w_i (F_i x + f_i)^2
    f: np.ndarray
    w: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    G: sp.csr_matrix  # G x <= h
    h: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cone_groups: list[ConeGroup] = field(default_factory=list)


# ==============================
# Program
# ==============================
class ConicProgram:
    def __init__(self, name: str = "program"):
        self.name = name
        self._n = 0
        self._lower: list[np.ndarray] = []
        self._upper: list[np.ndarray] = []
        self.names: dict[str, int] = {}
        self.blocks: dict[str, VariableBlock] = {}

        self.linear_objective = AffineExpr()
        self.quadratic_terms: list[tuple[float, AffineExpr]] = []
        self.equalities: list[tuple[AffineExpr, str | None]] = []
        self.inequalities: list[tuple[AffineExpr, str | None]] = []
        self.cones: list[Cone] = []

    # ───────────────────────────────
    # variables
    # ───────────────────────────────
    @property
    def num_variables(self) -> int:
        return self._n

    def add_variable(self, name: str, lower: float = -math.inf, upper: float = math.inf) -> Variable:
        self._claim(name)
        lo, hi = self._check_bounds(name, np.array([lower], dtype=float), np.array([upper], dtype=float))
        index = self._n
        self._lower.append(lo)
        self._upper.append(hi)
        self._n += 1
        self.names[name] = index
        return Variable(index, name)

    def add_variable_block(self, name: str, shape, lower=-math.inf, upper=math.inf) -> VariableBlock:
        self._claim(name)
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        lo = np.broadcast_to(np.asarray(lower, dtype=float), shape).ravel().copy()
        hi = np.broadcast_to(np.asarray(upper, dtype=float), shape).ravel().copy()
        lo, hi = self._check_bounds(name, lo, hi)
        block = VariableBlock(name, self._n, shape)
        self._lower.append(lo)
        self._upper.append(hi)
        self._n += block.size
        self.blocks[name] = block
        return block

    def block(self, name: str) -> VariableBlock:
        try:
            return self.blocks[name]
        except KeyError:
            raise ProgramError(f"unknown variable block '{name}'") from None

    def variable(self, name: str) -> Variable:
        if name not in self.names:
            raise ProgramError(f"unknown variable '{name}'")
        return Variable(self.names[name], name)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._lower:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(self._lower), np.concatenate(self._upper)

    def vector(self, values: dict[str, np.ndarray] | None = None) -> np.ndarray:
        """Full variable vector with the given blocks filled in (zeros elsewhere)."""
        x = np.zeros(self._n)
        for name, val in (values or {}).items():
            self.block(name).assign(x, val)
        return x

    def _claim(self, name: str) -> None:
        if name in self.names or name in self.blocks:
            raise ProgramError(f"duplicate variable name '{name}'")

    @staticmethod
    def _check_bounds(name: str, lo: np.ndarray, hi: np.ndarray):
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise ProgramError(f"NaN bound on '{name}'")
        if (lo > hi).any():
            raise ProgramError(f"inverted bounds on '{name}'")
        return lo, hi

    # ───────────────────────────────
    # rows, cones, objective
    # ───────────────────────────────
    def add_equality(self, lhs, rhs=0.0, label: str | None = None) -> int:
        """lhs == rhs; returns the equality row id."""
        expr = self._checked(as_expr(lhs) - rhs)
        self.equalities.append((expr, label))
        return len(self.equalities) - 1

    def add_inequality(self, lhs, rhs=0.0, label: str | None = None) -> int:
        """lhs <= rhs; returns the inequality row id."""
        expr = self._checked(as_expr(lhs) - rhs)
        self.inequalities.append((expr, label))
        return len(self.inequalities) - 1

    def add_soc(self, t, xs, label: str | None = None) -> int:
        """||xs|| <= t."""
        xs = list(xs)
        if not xs:
            raise ProgramError("second-order cone needs at least one x expression")
        exprs = [self._checked(as_expr(e)) for e in (t, *xs)]
        self.cones.append(Cone("soc", exprs, label))
        return len(self.cones) - 1

    def add_rotated(self, u, v, xs, label: str | None = None) -> int:
        """||xs||^2 <= u * v with u, v >= 0."""
        xs = list(xs)
        if not xs:
            raise ProgramError("rotated cone needs at least one x expression")
        exprs = [self._checked(as_expr(e)) for e in (u, v, *xs)]
        self.cones.append(Cone("rotated", exprs, label))
        return len(self.cones) - 1

    def add_linear_objective(self, expr, scale: float = 1.0) -> None:
        self.linear_objective.add(self._checked(as_expr(expr)), scale)

    def add_quadratic_objective(self, expr, weight: float = 1.0) -> None:
        """objective += weight * expr^2 (weight >= 0 keeps the objective convex)."""
        if weight < 0:
            raise ProgramError("quadratic objective weight must be nonnegative")
        if weight > 0:
            self.quadratic_terms.append((float(weight), self._checked(as_expr(expr))))

    def _checked(self, expr: AffineExpr) -> AffineExpr:
        if expr.terms:
            top = max(expr.terms)
            if top >= self._n or min(expr.terms) < 0:
                raise ProgramError(f"expression references unregistered variable index {top}")
        return expr

    # ───────────────────────────────
    # evaluation
    # ───────────────────────────────
    def evaluate_objective(self, x: np.ndarray) -> float:
        value = self.linear_objective.evaluate(x)
        for w, e in self.quadratic_terms:
            value += w * e.evaluate(x) ** 2
        return value

    def cone_residual(self, cone_id: int, x: np.ndarray) -> float:
        """t - ||x|| of the plain form; negative means the cone is violated."""
        t, *xs = self.cones[cone_id].as_plain()
        return t.evaluate(x) - math.hypot(*(e.evaluate(x) for e in xs))

    # ───────────────────────────────
    # standard form
    # ───────────────────────────────
    def to_standard_form(self) -> StandardForm:
        n = self._n
        lower, upper = self.bounds()

        c = np.zeros(n)
        for i, coef in self.linear_objective.terms.items():
            c[i] += coef

        F, f = _rows_to_csr([e for _, e in self.quadratic_terms], n)
        w = np.array([wt for wt, _ in self.quadratic_terms], dtype=float)
        A_eq, b_eq = _rows_to_csr([e for e, _ in self.equalities], n)
        G, h = _rows_to_csr([e for e, _ in self.inequalities], n)

        by_dim: dict[int, list[tuple[int, list[AffineExpr]]]] = {}
        for cid, cone in enumerate(self.cones):
            plain = cone.as_plain()
            by_dim.setdefault(len(plain), []).append((cid, plain))

        groups = []
        for dim, members in by_dim.items():
            heads, head_const = _rows_to_csr([m[1][0] for m in members], n)
            tails, tail_const = [], []
            for j in range(1, dim):
                mat, const = _rows_to_csr([m[1][j] for m in members], n)
                tails.append(mat)
                tail_const.append(-const)
            groups.append(ConeGroup(dim, [m[0] for m in members], heads, -head_const, tails, tail_const))

        return StandardForm(
            n=n, c=c, objective_constant=self.linear_objective.constant,
            F=F, f=-f, w=w, A_eq=A_eq, b_eq=b_eq, G=G, h=h,
            lower=lower, upper=upper, cone_groups=groups,
        )

    def summary(self) -> str:
        return (
            f"{self.name}: {self._n} variables, {len(self.equalities)} equalities, "
            f"{len(self.inequalities)} inequalities, {len(self.cones)} cones, "
            f"{len(self.quadratic_terms)} squared terms"
        )


def _rows_to_csr(exprs: list[AffineExpr], n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Row i holds exprs[i].terms; returned vector is -constant (so that row x == vector)."""
    rows, cols, data = [], [], []
    rhs = np.zeros(len(exprs))
    for r, e in enumerate(exprs):
        for i, coef in e.terms.items():
            rows.append(r)
            cols.append(i)
            data.append(coef)
        rhs[r] = -e.constant
    mat = sp.csr_matrix((data, (rows, cols)), shape=(len(exprs), n))
    return mat, rhs


# ==============================
# Dump
# ==============================
def dump_program(program: ConicProgram, path: str) -> str:
    """Write ``program`` as self-describing JSON (see docs/program_dump.md)."""

    def enc(e: AffineExpr) -> dict:
        return {"terms": [[i, c] for i, c in e.terms.items()], "constant": e.constant}

    def bound(v: float):
        return None if math.isinf(v) else float(v)

    lower, upper = program.bounds()
    names = {i: n for n, i in program.names.items()}
    for name, blk in program.blocks.items():
        for k, idx in enumerate(blk.indices().ravel()):
            names[int(idx)] = f"{name}[{','.join(map(str, np.unravel_index(k, blk.shape)))}]" if blk.shape else name

    doc = {
        "format": "ogpf-conic-program",
        "version": 1,
        "name": program.name,
        "variables": [
            {"index": i, "name": names.get(i, f"x{i}"), "lower": bound(lower[i]), "upper": bound(upper[i])}
            for i in range(program.num_variables)
        ],
        "objective": {
            "linear": enc(program.linear_objective),
            "squares": [{"weight": w, "expr": enc(e)} for w, e in program.quadratic_terms],
        },
        "equalities": [{"label": lbl, "expr": enc(e)} for e, lbl in program.equalities],
        "inequalities": [{"label": lbl, "expr": enc(e)} for e, lbl in program.inequalities],
        "cones": [
            {"kind": c.kind, "label": c.label, "exprs": [enc(e) for e in c.exprs]} for c in program.cones
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    return path
