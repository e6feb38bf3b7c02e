# app/utils/results_writer.py
import logging
import os
from datetime import datetime

import numpy as np
import pandas as pd

from app.config import settings
from app.config.aws_s3 import upload_artifacts_to_s3
from app.model.network import CoupledCase
from app.ogf.gas_model import GasState
from app.opf.power_model import PowerState

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"  # full double precision


# ==============================
# Frames
# ==============================
def dispatch_frame(power: PowerState, case: CoupledCase) -> pd.DataFrame:
    """Per-period active/reactive output of every DG (per unit of the power base)."""
    rows = []
    net = case.power
    for t in range(power.periods):
        for k, gen in enumerate(net.generators):
            rows.append((t, gen.id, gen.bus, "conventional", power.p_g[t, k], power.q_g[t, k]))
        for k, gen in enumerate(net.gas_generators):
            rows.append((t, gen.id, gen.bus, "gas-fired", power.p_n[t, k], power.q_n[t, k]))
    return pd.DataFrame(rows, columns=["period", "generator", "bus", "kind", "p_pu", "q_pu"])


def gasflow_frame(gas: GasState, case: CoupledCase) -> pd.DataFrame:
    """Long format: supplies, pipe and compressor flows, pressures and linepack with their units."""
    g = case.gas
    rows = []
    for t in range(gas.periods):
        for k, w in enumerate(g.retailers):
            rows.append((t, w.id, "supply", gas.y_w[t, k], "pu_flow"))
        for k, p in enumerate(g.pipelines):
            rows.append((t, p.id, "inflow", gas.y_in[t, k], "pu_flow"))
            rows.append((t, p.id, "outflow", gas.y_out[t, k], "pu_flow"))
            rows.append((t, p.id, "linepack", gas.m[t, k], "pu_flow_period"))
        for k, c in enumerate(g.compressors):
            rows.append((t, c.id, "inflow", gas.yc_in[t, k], "pu_flow"))
            rows.append((t, c.id, "outflow", gas.yc_out[t, k], "pu_flow"))
        for i, n in enumerate(g.nodes):
            rows.append((t, n.id, "pressure", gas.u[t, i], "pu_pressure"))
    return pd.DataFrame(rows, columns=["period", "component", "quantity", "value", "unit"])


def convergence_frame(admm_state=None, ssa_state=None) -> pd.DataFrame:
    """ADMM and SSA traces stacked, tagged by loop.

    SSA rows run inside an ADMM z-update carry the outer iteration in
    ``admm_iteration``; a stand-alone SSA run leaves it empty.
    """
    frames = []
    if admm_state is not None:
        frames.append(admm_state.trace_frame().rename(columns={"k": "iteration"}).assign(loop="admm"))
        inner = admm_state.ssa_trace_frame()
        if not inner.empty:
            frames.append(inner.rename(columns={"j": "iteration"}).assign(loop="ssa"))
    if ssa_state is not None:
        frames.append(ssa_state.trace_frame().rename(columns={"j": "iteration"}).assign(loop="ssa"))
    if not frames:
        return pd.DataFrame(columns=["loop", "iteration"])
    df = pd.concat(frames, ignore_index=True)
    return df[["loop", "iteration"] + [c for c in df.columns if c not in ("loop", "iteration")]]


def emit_linepack_profile(
    gas: GasState, case: CoupledCase, path: str | None = None, dg_offtake: np.ndarray | None = None
) -> pd.DataFrame:
    """Per-period total linepack, gas stored / extracted, and extracted share of gas demand.

    Args:
        gas: gas-side solution.
        case: the case (horizon, initial linepack, gas loads).
        path: optional CSV destination.
        dg_offtake: (T, gas-fired DGs) offtake added to the demand total.

    Returns:
        pd.DataFrame: one row per period.
    """
    total = gas.m.sum(axis=1)
    initial = sum(p.initial_linepack for p in case.gas.pipelines)
    change = np.diff(np.concatenate([[initial], total]))
    demand = case.gas_demand.sum(axis=1)[: gas.periods]
    if dg_offtake is not None:
        demand = demand + np.asarray(dg_offtake).sum(axis=1)
    extracted = np.maximum(0.0, -change)
    share = np.divide(100.0 * extracted, demand, out=np.zeros_like(extracted), where=demand > 0)

    df = pd.DataFrame({
        "period": np.arange(gas.periods),
        "linepack_pu": total,
        "stored_pu": np.maximum(0.0, change),
        "extracted_pu": extracted,
        "gas_demand_pu": demand,
        "extracted_pct_of_demand": share,
    })
    if path:
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"✅ Linepack profile written to {path}")
    return df


# ==============================
# Files
# ==============================
def write_summary(path: str, fields: dict) -> str:
    stamp = datetime.now(settings.TIMEZONE).strftime("%Y-%m-%d %H:%M:%S %Z")
    with open(path, "w") as fh:
        fh.write(f"run at: {stamp}\n")
        for key, value in fields.items():
            fh.write(f"{key}: {value}\n")
    return path


def write_feasibility(report, output_dir: str) -> list[str]:
    text_path = os.path.join(output_dir, "feasibility.txt")
    csv_path = os.path.join(output_dir, "feasibility.csv")
    with open(text_path, "w") as fh:
        fh.write(report.to_text())
    report.to_frame().to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    return [text_path, csv_path]


def write_frames(frames: dict[str, pd.DataFrame], output_dir: str) -> list[str]:
    paths = []
    for name, df in frames.items():
        path = os.path.join(output_dir, name)
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        paths.append(path)
    return paths


def publish(paths: list[str], bucket: str | None, prefix: str, run_name: str) -> list[str]:
    """Upload artifacts under ``prefix/run_name`` when a bucket is configured."""
    if not bucket:
        return []
    uploaded = upload_artifacts_to_s3(paths, bucket, f"{prefix.rstrip('/')}/{run_name}")
    if len(uploaded) < len(paths):
        logger.warning(f"⚠️ Uploaded {len(uploaded)}/{len(paths)} artifacts to s3://{bucket}")
    return uploaded
