# app/main.py
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from app.admm.centralized import solve_centralized, solve_centralized_relaxation
from app.admm.coordinator import GAS_MODELS, AdmmOptions, run_admm
from app.config import settings
from app.config.logging_config import setup_logging
from app.conic.backend import SolverOptions
from app.errors import CaseError, OracleError, ProgramError, SolveError
from app.model.case_loader import load_case
from app.ogf.gas_model import dg_offtake_from
from app.ogf.ssa import WARM_STARTS, SsaParams
from app.opf.exactness import check_soc_exactness
from app.oracle.feasibility import feasibility_report
from app.oracle.forward import screen_gas_network
from app.utils.results_writer import (
    convergence_frame,
    dispatch_frame,
    emit_linepack_profile,
    gasflow_frame,
    publish,
    write_feasibility,
    write_frames,
    write_summary,
)

logger = logging.getLogger(__name__)

MODES = ("centralized", "distributed", "relaxation", "forward-check")
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
STEADY_FAMILIES = ("bounds", "balance", "weymouth", "compressor")


# ───────────────────────────────
# Run configuration
# ───────────────────────────────
@dataclass
class RunConfig:
    case: str
    mode: str = "distributed"
    output_dir: str = settings.OUTPUT_DIR
    d: float = settings.ADMM_PENALTY
    sigma: float = settings.ADMM_TOLERANCE
    kmax: int = settings.ADMM_MAX_ITER
    delta: float = settings.SSA_DELTA
    rho0: float = settings.SSA_RHO0
    rho_max: float = settings.SSA_RHO_MAX
    epsilon: float = settings.SSA_EPSILON
    kappa: float = settings.SSA_KAPPA
    jmax: int = settings.SSA_MAX_ITER
    warm_start: str = settings.SSA_WARM_START
    gas_model: str = "ssa"
    solver: str = settings.SOLVER_NAME
    seed: int = 0
    s3_bucket: str = settings.S3_BUCKET
    s3_prefix: str = settings.S3_PREFIX
    log_level: str = settings.LOG_LEVEL

    def __post_init__(self):
        if self.mode not in MODES:
            raise ProgramError(f"unknown mode '{self.mode}' (expected one of {MODES})")
        if self.warm_start not in WARM_STARTS:
            raise ProgramError(f"unknown warm start '{self.warm_start}'")
        if self.gas_model not in GAS_MODELS:
            raise ProgramError(f"unknown gas model '{self.gas_model}'")

    def ssa_params(self) -> SsaParams:
        return SsaParams(
            delta=self.delta, rho0=self.rho0, rho_max=self.rho_max, epsilon=self.epsilon,
            kappa=self.kappa, max_iter=self.jmax, warm_start=self.warm_start,
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(solver=self.solver)

    def admm_options(self) -> AdmmOptions:
        return AdmmOptions(
            penalty=self.d, tolerance=self.sigma, max_iter=self.kmax,
            gas_model=self.gas_model, ssa=self.ssa_params(), solver=self.solver_options(),
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ogpf", description="Coupled gas-power optimal flow")
    parser.add_argument("case", nargs="?", help="case JSON (local path or s3://bucket/key)")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--config", help="JSON file with run parameters; flags override it")
    parser.add_argument("--d", type=float, help="ADMM penalty")
    parser.add_argument("--sigma", type=float, help="ADMM residual tolerance")
    parser.add_argument("--kmax", type=int, help="ADMM iteration limit")
    parser.add_argument("--delta", type=float, help="SSA objective-change tolerance")
    parser.add_argument("--rho0", type=float, help="SSA initial penalty")
    parser.add_argument("--rho-max", dest="rho_max", type=float, help="SSA penalty cap")
    parser.add_argument("--epsilon", type=float, help="SSA relative slack tolerance")
    parser.add_argument("--kappa", type=float, help="SSA penalty growth")
    parser.add_argument("--jmax", type=int, help="SSA iteration limit")
    parser.add_argument("--warm-start", dest="warm_start", choices=WARM_STARTS)
    parser.add_argument("--gas-model", dest="gas_model", choices=GAS_MODELS)
    parser.add_argument("--solver")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--s3-bucket", dest="s3_bucket")
    parser.add_argument("--s3-prefix", dest="s3_prefix")
    parser.add_argument("--log-level", dest="log_level")
    return parser


def config_from_args(argv: list[str] | None = None) -> RunConfig:
    """defaults < --config file < flags."""
    args = build_parser().parse_args(argv)
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        unknown = set(data) - known
        if unknown:
            raise ProgramError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    values.update({k: v for k, v in vars(args).items() if k in known and v is not None})
    if not values.get("case"):
        raise ProgramError("no case given (positional argument or 'case' in --config)")
    return RunConfig(**values)


# ───────────────────────────────
# Modes
# ───────────────────────────────
def _solve(case, config: RunConfig):
    """Returns (power, gas, objective, converged, iterations, convergence frame, label)."""
    if config.mode == "centralized":
        result = solve_centralized(case, config.ssa_params(), config.solver_options())
        trace = convergence_frame(ssa_state=result.ssa)
        return result.power, result.gas, result.objective, result.converged, result.ssa.iteration, trace, ""
    if config.mode == "relaxation":
        result = solve_centralized_relaxation(case, config.solver_options())
        return result.power, result.gas, result.objective, True, 1, convergence_frame(), "lower bound only"
    result = run_admm(case, config.admm_options())
    trace = convergence_frame(admm_state=result.state)
    return result.power, result.gas, result.state.objective, result.converged, result.state.iteration, trace, ""


def _forward_check(case, config: RunConfig) -> int:
    gas = screen_gas_network(case)
    offtake = np.tile([g.p_max / g.beta for g in case.power.gas_generators], (case.periods, 1))
    report = feasibility_report(case, None, gas, dg_offtake=offtake)

    out = config.output_dir
    paths = write_frames({"gasflow.csv": gasflow_frame(gas, case)}, out)
    emit_linepack_profile(gas, case, os.path.join(out, "linepack.csv"), dg_offtake=offtake)
    paths.append(os.path.join(out, "linepack.csv"))
    paths += write_feasibility(report, out)
    # steady screen: linepack dynamics are not modelled
    clean = report.violation_free(families=STEADY_FAMILIES)
    paths.append(write_summary(os.path.join(out, "summary.txt"), {
        "case": case.name,
        "mode": config.mode,
        "result": "steady screen passes" if clean else "steady screen reports violations",
        "macv": f"{report.macv:.6e}",
        "mrcv": f"{report.mrcv:.6e}",
    }))
    publish(paths, config.s3_bucket, config.s3_prefix, case.name)
    return EXIT_OK if clean else EXIT_NOT_CONVERGED


def run(config: RunConfig) -> int:
    """Load the case, run the selected mode, write artifacts; returns the exit code."""
    started = time.perf_counter()
    try:
        os.makedirs(config.output_dir, exist_ok=True)
        if not os.access(config.output_dir, os.W_OK):
            raise OSError(f"output directory not writable: {config.output_dir}")
        np.random.seed(config.seed)

        case = load_case(config.case)
        logger.info(f"🚀 {config.mode} run on '{case.name}' ({case.periods} periods)")

        if config.mode == "forward-check":
            return _forward_check(case, config)

        power, gas, objective, converged, iterations, trace, label = _solve(case, config)
        exactness = check_soc_exactness(power, case)
        offtake = dg_offtake_from(case, power.p_n)
        report = feasibility_report(case, power, gas)

        out = config.output_dir
        paths = write_frames({
            "dispatch.csv": dispatch_frame(power, case),
            "gasflow.csv": gasflow_frame(gas, case),
            "convergence.csv": trace,
        }, out)
        emit_linepack_profile(gas, case, os.path.join(out, "linepack.csv"), dg_offtake=offtake)
        paths.append(os.path.join(out, "linepack.csv"))
        paths += write_feasibility(report, out)

        summary = {
            "case": case.name,
            "mode": config.mode,
            "objective": f"{objective:.10g}" + (f" ({label})" if label else ""),
            "converged": converged,
            "iterations": iterations,
            "wall_time_s": f"{time.perf_counter() - started:.3f}",
            "soc_exact": exactness.exact,
            "soc_max_gap": f"{exactness.max_gap:.3e}",
            "macv": f"{report.macv:.6e}",
            "mrcv": f"{report.mrcv:.6e}",
            "parameters": json.dumps({k: v for k, v in asdict(config).items() if k not in ("case", "s3_bucket")}),
        }
        paths.append(write_summary(os.path.join(out, "summary.txt"), summary))
        publish(paths, config.s3_bucket, config.s3_prefix, case.name)

        if converged:
            logger.info(f"✅ Done: objective {objective:.6g}, artifacts in {out}")
            return EXIT_OK
        logger.warning(f"⚠️ Not converged after {iterations} iterations; partial artifacts in {out}")
        return EXIT_NOT_CONVERGED

    except (CaseError, SolveError, OracleError, ProgramError, OSError) as e:
        logger.error(f"❌ Run failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


# ───────────────────────────────
# Entry
# ───────────────────────────────
def main(argv: list[str] | None = None) -> int:
    try:
        config = config_from_args(argv)
    except (ProgramError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    setup_logging(config.log_level)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
