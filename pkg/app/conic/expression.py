# app/conic/expression.py
"""Sparse affine expressions over the variables of a ``ConicProgram``."""

from __future__ import annotations

from numbers import Real
from typing import Iterable

import numpy as np


class AffineExpr:
    """sum_i coef_i * x_i + constant, with ``terms`` mapping variable index -> coef."""

    __slots__ = ("terms", "constant")
    __array_ufunc__ = None  # numpy scalars defer to our reflected operators

    def __init__(self, terms: dict[int, float] | None = None, constant: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.constant = float(constant)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> "AffineExpr":
        return cls({int(index): float(coef)})

    @classmethod
    def const(cls, value: float) -> "AffineExpr":
        return cls(constant=value)

    @classmethod
    def total(cls, items: Iterable["AffineExpr | Variable | float"]) -> "AffineExpr":
        out = cls()
        for item in items:
            out.add(item)
        return out

    # ───────────────────────────────
    # in-place builders
    # ───────────────────────────────
    def add_term(self, index: int, coef: float) -> "AffineExpr":
        if coef:
            index = int(index)
            self.terms[index] = self.terms.get(index, 0.0) + float(coef)
        return self

    def add(self, other, scale: float = 1.0) -> "AffineExpr":
        if isinstance(other, Real):
            self.constant += scale * float(other)
            return self
        other = as_expr(other)
        for i, c in other.terms.items():
            self.terms[i] = self.terms.get(i, 0.0) + scale * c
        self.constant += scale * other.constant
        return self

    # ───────────────────────────────
    # operators (return new objects)
    # ───────────────────────────────
    def copy(self) -> "AffineExpr":
        return AffineExpr(dict(self.terms), self.constant)

    def __add__(self, other):
        return self.copy().add(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy().add(other, -1.0)

    def __rsub__(self, other):
        return (-self).add(other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        if not isinstance(k, Real):
            return NotImplemented
        k = float(k)
        return AffineExpr({i: c * k for i, c in self.terms.items()}, self.constant * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def evaluate(self, x: np.ndarray) -> float:
        return self.constant + sum(c * x[i] for i, c in self.terms.items())

    def is_constant(self) -> bool:
        return not any(self.terms.values())

    def __repr__(self) -> str:
        body = " + ".join(f"{c:g}*x{i}" for i, c in self.terms.items())
        return f"AffineExpr({body or '0'} + {self.constant:g})"


class Variable:
    """Handle to one scalar variable of a program."""

    __slots__ = ("index", "name")
    __array_ufunc__ = None

    def __init__(self, index: int, name: str):
        self.index = index
        self.name = name

    @property
    def expr(self) -> AffineExpr:
        return AffineExpr.var(self.index)

    def __add__(self, other):
        return self.expr + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr - other

    def __rsub__(self, other):
        return other - self.expr

    def __neg__(self):
        return -self.expr

    def __mul__(self, k):
        return self.expr * k

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Variable({self.name!r}, index={self.index})"


def as_expr(value) -> AffineExpr:
    if isinstance(value, AffineExpr):
        return value
    if isinstance(value, Variable):
        return value.expr
    if isinstance(value, Real):
        return AffineExpr.const(value)
    raise TypeError(f"cannot use {type(value).__name__} in an affine expression")
