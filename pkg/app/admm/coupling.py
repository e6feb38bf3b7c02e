# app/admm/coupling.py
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from app.conic.expression import AffineExpr
from app.conic.program import ConicProgram
from app.errors import ProgramError
from app.model.network import CoupledCase
from app.ogf.gas_model import GasVariables, gas_balance_expr
from app.opf.power_model import PowerVariables, active_balance_expr

logger = logging.getLogger(__name__)


@dataclass
class CouplingSystem:
    """Linear coupling rows A x + B z = c between the power vector x and the gas vector z."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    c: np.ndarray
    labels: list[tuple[str, str, int]]  # (family, bus/node id, period)

    @property
    def rows(self) -> int:
        return self.c.shape[0]

    def residual(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ z - self.c


def coupling_rows(case: CoupledCase, pv: PowerVariables, gv: GasVariables) -> list[tuple[tuple, AffineExpr]]:
    """Active balance at compressor-serving buses, then gas balance at DG-fuel nodes, period by period."""
    rows = []
    for t in range(case.periods):
        for bus in case.coupled_buses:
            e = active_balance_expr(case, pv, bus, t)
            for k in case.compressors_at_bus[bus]:
                comp = case.gas.compressors[k]
                e.add_term(gv.yc_in.index(t, k), -comp.chi * comp.alpha)
            rows.append((("power", bus, t), e))
    for t in range(case.periods):
        for node in case.coupled_nodes:
            e = gas_balance_expr(case, gv, node, t)
            for k in case.gas_generators_at_node[node]:
                e.add_term(pv.p_n.index(t, k), -1.0 / case.power.gas_generators[k].beta)
            rows.append((("gas", node, t), e))
    return rows


def assemble_coupling(case: CoupledCase) -> CouplingSystem:
    if not case.coupled_buses and not case.coupled_nodes:
        raise ProgramError("empty coupling map: solve the power and gas problems independently")

    scratch = ConicProgram("coupling")
    pv = PowerVariables.register(scratch, case)
    gv = GasVariables.register(scratch, case)
    n_power = pv.size

    rows = coupling_rows(case, pv, gv)
    a_rows, a_cols, a_vals, b_rows, b_cols, b_vals = [], [], [], [], [], []
    c = np.zeros(len(rows))
    for r, (_, e) in enumerate(rows):
        c[r] = -e.constant
        for j, v in e.terms.items():
            if j < n_power:
                a_rows.append(r), a_cols.append(j), a_vals.append(v)
            else:
                b_rows.append(r), b_cols.append(j - n_power), b_vals.append(v)

    A = sp.csr_matrix((a_vals, (a_rows, a_cols)), shape=(len(rows), n_power))
    B = sp.csr_matrix((b_vals, (b_rows, b_cols)), shape=(len(rows), gv.size))
    logger.info(f"📊 Coupling system: {len(rows)} rows, {n_power} power / {gv.size} gas columns")
    return CouplingSystem(A, B, c, [label for label, _ in rows])


@dataclass
class CouplingContext:
    """Augmented-Lagrangian data for one side's update: the other side's vector is held fixed."""

    system: CouplingSystem
    fixed: np.ndarray
    duals: np.ndarray
    penalty: float
    free_side: str  # "power" or "gas"

    def __post_init__(self):
        if self.free_side not in ("power", "gas"):
            raise ProgramError(f"unknown coupling side '{self.free_side}'")
        other = self.system.B if self.free_side == "power" else self.system.A
        if self.fixed.shape != (other.shape[1],):
            raise ProgramError(f"fixed vector must have {other.shape[1]} entries, got {self.fixed.shape}")
        if self.duals.shape != (self.system.rows,):
            raise ProgramError(f"duals must have {self.system.rows} entries, got {self.duals.shape}")
        if self.penalty <= 0:
            raise ProgramError("ADMM penalty must be positive")

    @classmethod
    def for_power(cls, system, z, duals, penalty) -> "CouplingContext":
        return cls(system, np.asarray(z, dtype=float), np.asarray(duals, dtype=float), penalty, "power")

    @classmethod
    def for_gas(cls, system, x, duals, penalty) -> "CouplingContext":
        return cls(system, np.asarray(x, dtype=float), np.asarray(duals, dtype=float), penalty, "gas")

    def add_augmented_terms(self, program: ConicProgram, side: str, offset: int) -> None:
        """xi_r * row_r + d/2 * row_r^2 for every coupling row, over the free side's variables."""
        if side != self.free_side:
            raise ProgramError(f"context built for the {self.free_side} update, used on the {side} side")
        if side == "power":
            M, constant = self.system.A, self.system.B @ self.fixed - self.system.c
        else:
            M, constant = self.system.B, self.system.A @ self.fixed - self.system.c
        if offset + M.shape[1] > program.num_variables:
            raise ProgramError("coupling columns exceed the program's variables")

        for r in range(self.system.rows):
            lo, hi = M.indptr[r], M.indptr[r + 1]
            e = AffineExpr(constant=float(constant[r]))
            for j, v in zip(M.indices[lo:hi], M.data[lo:hi]):
                e.add_term(offset + int(j), float(v))
            program.add_linear_objective(e, scale=float(self.duals[r]))
            program.add_quadratic_objective(e, self.penalty / 2.0)
