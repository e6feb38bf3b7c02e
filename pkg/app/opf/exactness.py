# app/opf/exactness.py
import logging
from dataclasses import dataclass, field

import numpy as np

from app.config import settings
from app.model.network import CoupledCase
from app.opf.power_model import PowerState

logger = logging.getLogger(__name__)


@dataclass
class ExactnessReport:
    gaps: np.ndarray  # (T, lines): I * nu_from - (pf^2 + qf^2)
    threshold: float
    flagged: list[tuple[str, int, float]] = field(default_factory=list)

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gaps))) if self.gaps.size else 0.0

    @property
    def exact(self) -> bool:
        return not self.flagged


def check_soc_exactness(
    state: PowerState, case: CoupledCase, threshold: float = settings.EXACTNESS_THRESHOLD
) -> ExactnessReport:
    """Gap of the apparent-power cone per line and period; flags gaps above ``threshold``."""
    net = case.power
    from_idx = np.array([net.bus_index[line.from_bus] for line in net.lines], dtype=int)
    if from_idx.size == 0:
        return ExactnessReport(np.zeros((state.periods, 0)), threshold)

    gaps = state.current * state.nu[:, from_idx] - (state.pf ** 2 + state.qf ** 2)
    report = ExactnessReport(gaps, threshold)
    for t, k in zip(*np.nonzero(np.abs(gaps) > threshold)):
        report.flagged.append((net.lines[k].id, int(t), float(gaps[t, k])))

    if report.flagged:
        logger.warning(f"⚠️ SOC relaxation not exact on {len(report.flagged)} line-periods (max gap {report.max_gap:.2e})")
    else:
        logger.info(f"✅ SOC relaxation exact (max gap {report.max_gap:.2e})")
    return report
