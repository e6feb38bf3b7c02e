# app/config/settings.py

import os
from pytz import timezone


def _float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


def _int(name: str, default: int) -> int:
    return int(os.getenv(name, default))


# --- Timezone (run summaries are stamped in this zone) ---
TIMEZONE = timezone(os.getenv("OGPF_TIMEZONE", "UTC"))

# =========================
# ADMM (outer loop)
# =========================
ADMM_PENALTY = _float("OGPF_ADMM_PENALTY", 100.0)        # d
ADMM_TOLERANCE = _float("OGPF_ADMM_TOLERANCE", 1e-3)     # stopping tolerance on max|Ax+Bz-c|
ADMM_MAX_ITER = _int("OGPF_ADMM_MAX_ITER", 100)

# =========================
# SSA (gas-side sequential SOCP)
# =========================
SSA_DELTA = _float("OGPF_SSA_DELTA", 1.0)
SSA_RHO0 = _float("OGPF_SSA_RHO0", 0.01)
SSA_RHO_MAX = _float("OGPF_SSA_RHO_MAX", 1000.0)
SSA_EPSILON = _float("OGPF_SSA_EPSILON", 1e-6)
SSA_KAPPA = _float("OGPF_SSA_KAPPA", 2.0)
SSA_MAX_ITER = _int("OGPF_SSA_MAX_ITER", 100)
SSA_WARM_START = os.getenv("OGPF_SSA_WARM_START", "relaxation")
SSA_SLACK_FLOOR = _float("OGPF_SSA_SLACK_FLOOR", 1e-7)

# =========================
# Conic backend
# =========================
SOLVER_NAME = os.getenv("OGPF_SOLVER", "CLARABEL")
SOLVER_FEAS_TOL = _float("OGPF_SOLVER_FEAS_TOL", 1e-8)
SOLVER_GAP_TOL = _float("OGPF_SOLVER_GAP_TOL", 1e-8)
SOLVER_MAX_ITER = _int("OGPF_SOLVER_MAX_ITER", 500)

# --- Model defaults ---
DEFAULT_FUEL_RATE = 0.04          # compressor consumption when a case omits it
DEFAULT_POWER_FACTOR = 0.95       # lagging, for loads without a reactive peak
DEFAULT_PERIOD_HOURS = 1.0
EXACTNESS_THRESHOLD = _float("OGPF_EXACTNESS_THRESHOLD", 1e-6)

# --- Output / logs ---
OUTPUT_DIR = os.getenv("OGPF_OUTPUT_DIR", "outputs")
LOG_DIR = os.getenv("OGPF_LOG_DIR", "logs")
LOG_FILE = os.getenv("OGPF_LOG_FILE", os.path.join(LOG_DIR, "ogpf.log"))
LOG_LEVEL = os.getenv("OGPF_LOG_LEVEL", "INFO")

# --- AWS Config (optional artifact upload / case download) ---
AWS_REGION = os.getenv("AWS_REGION", "ap-south-1")
S3_BUCKET = os.getenv("OGPF_S3_BUCKET", "")
S3_PREFIX = os.getenv("OGPF_S3_PREFIX", "ogpf-runs")
