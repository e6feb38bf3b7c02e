# app/oracle/feasibility.py
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from app.admm.centralized import build_joint_program
from app.conic.program import ConicProgram
from app.model.network import CoupledCase
from app.ogf.gas_model import GAS_BLOCKS, GasState, build_gas_constraints
from app.opf.power_model import POWER_BLOCKS, PowerState

logger = logging.getLogger(__name__)

FAMILIES = ("bounds", "balance", "coupling", "voltage", "cone", "weymouth", "linepack", "compressor")

# row-label prefix -> family
_FAMILY_OF = {
    "P": "balance",
    "Q": "balance",
    "G": "balance",
    "C": "coupling",
    "V": "voltage",
    "S": "cone",
    "M": "linepack",
    "dM": "linepack",
    "MT": "linepack",
    "dir": "weymouth",
    "ratio": "compressor",
    "fuel": "compressor",
}

HEADER = (
    "MACV = max absolute constraint violation (per unit)\n"
    "MRCV = max over rows of |violation| / max(1, |row right-hand side|)\n"
)


@dataclass
class FamilyStats:
    family: str
    rows: int = 0
    macv: float = 0.0
    mrcv: float = 0.0
    worst: str = ""

    def update(self, labels, absolute, rhs) -> None:
        absolute = np.asarray(absolute, dtype=float).ravel()
        if absolute.size == 0:
            return
        relative = absolute / np.maximum(1.0, np.abs(np.asarray(rhs, dtype=float).ravel()))
        self.rows += absolute.size
        k = int(np.argmax(absolute))
        if absolute[k] > self.macv:
            self.macv = float(absolute[k])
            self.worst = labels[k] if labels is not None else ""
        self.mrcv = max(self.mrcv, float(relative.max()))


@dataclass
class FeasibilityReport:
    families: dict[str, FamilyStats] = field(default_factory=lambda: {f: FamilyStats(f) for f in FAMILIES})

    @property
    def macv(self) -> float:
        return max(s.macv for s in self.families.values())

    @property
    def mrcv(self) -> float:
        return max(s.mrcv for s in self.families.values())

    def violation_free(self, tol: float = 1e-6, families=None) -> bool:
        chosen = families or FAMILIES
        return all(self.families[f].macv <= tol for f in chosen)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(s.family, s.rows, s.macv, s.mrcv, s.worst) for s in self.families.values()],
            columns=["family", "rows", "macv_pu", "mrcv", "worst_row"],
        )

    def to_text(self) -> str:
        lines = [HEADER, f"MACV: {self.macv:.6e}", f"MRCV: {self.mrcv:.6e}", ""]
        lines.append(f"{'family':<12}{'rows':>8}{'MACV':>16}{'MRCV':>16}  worst row")
        for s in self.families.values():
            lines.append(f"{s.family:<12}{s.rows:>8}{s.macv:>16.6e}{s.mrcv:>16.6e}  {s.worst}")
        return "\n".join(lines) + "\n"


def _family(label: str | None) -> str | None:
    if not label:
        return None
    return _FAMILY_OF.get(label.split("[", 1)[0])


def feasibility_report(
    case: CoupledCase,
    power: PowerState | None,
    gas: GasState,
    dg_offtake: np.ndarray | None = None,
) -> FeasibilityReport:
    """Evaluate every constraint row at the given states.

    With ``power=None`` only the gas side is checked, with the DG offtake
    held at ``dg_offtake`` (zero when omitted).
    """
    if power is None:
        program = ConicProgram("feasibility-gas")
        build_gas_constraints(case, program, "ssa", coupled="fixed", dg_offtake=dg_offtake)
        values = {}
    else:
        program, _, _ = build_joint_program(case, "ssa", name="feasibility")
        values = {name: getattr(power, name) for name in POWER_BLOCKS}
    values.update({name: getattr(gas, name) for name in GAS_BLOCKS})
    x = program.vector(values)
    report = FeasibilityReport()

    # bounds
    lower, upper = program.bounds()
    below, above = lower - x, x - upper
    excess = np.maximum(0.0, np.maximum(below, above))
    bound = np.where(below >= above, lower, upper)
    names = np.empty(x.size, dtype=object)
    for block in program.blocks.values():
        names[block.start:block.start + block.size] = block.name
    report.families["bounds"].update(list(names), excess, np.where(np.isfinite(bound), bound, 0.0))

    # equality / inequality rows grouped by family
    grouped: dict[str, tuple[list, list, list]] = {}
    for rows, one_sided in ((program.equalities, False), (program.inequalities, True)):
        for expr, label in rows:
            family = _family(label)
            if family is None:
                continue
            value = expr.evaluate(x)
            violation = max(0.0, value) if one_sided else abs(value)
            bucket = grouped.setdefault(family, ([], [], []))
            bucket[0].append(label)
            bucket[1].append(violation)
            bucket[2].append(expr.constant)
    for family, (labels, absolute, rhs) in grouped.items():
        report.families[family].update(labels, absolute, rhs)

    # power cones
    labels, absolute, rhs = [], [], []
    for cone_id, cone in enumerate(program.cones):
        if _family(cone.label) != "cone":
            continue
        labels.append(cone.label)
        absolute.append(max(0.0, -program.cone_residual(cone_id, x)))
        rhs.append(cone.as_plain()[0].evaluate(x))
    report.families["cone"].update(labels, absolute, rhs)

    # Weymouth equality, which no conic row carries exactly
    lhs, drop = gas.weymouth_sides(case)
    pipe_labels = [f"W[{p.id},{t}]" for t in range(case.periods) for p in case.gas.pipelines]
    report.families["weymouth"].update(pipe_labels, np.abs(lhs - drop), drop)

    logger.info(f"📊 Feasibility: MACV={report.macv:.3e}, MRCV={report.mrcv:.3e}")
    return report
