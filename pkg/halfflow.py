#!/usr/bin/env python3
"""
Command-line entry point

    halfflow.py simulate [config]          run one configured trajectory and its checks
    halfflow.py verify <id|all> [--trials]  randomized ratio tests of the inequality suite
    halfflow.py sweep <spec.json>           named experiment or one-parameter sweep
    halfflow.py inspect <snapshot>          header and diagnostics of a snapshot file

Exit codes: 0 success, 1 a check failed, 2 configuration error.
"""

from pathlib import Path
from typing import List, Optional
import argparse
import logging
import sys

from pydantic import ValidationError
from scipy import fft

from config import settings
from config.sim_config import SimConfig
from core.errors import ConfigError, FormatError, HalfFlowError, ParameterError
from core.field import winding_number
from core.norms import energy, grad_seminorm
from core.records import CheckStatus, ExperimentSummary, render_text
from services.analysis_service import INEQUALITIES, SamplerSpec, normalize_id, verify_ratio
from services.experiment_service import run_spec_file
from services.io_service import read_snapshot
from services.simulation_service import SimulationService

logger = logging.getLogger("halfflow")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

# ratio-suite sampler grids per dimension
VERIFY_DIMS = {1: 64, 2: 32, 3: 16}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halfflow", description="Half-harmonic flow simulator and verification harness")
    parser.add_argument("--seed", type=int, default=None, help="override the random seed")
    parser.add_argument("--threads", type=int, default=settings.FFT_THREADS, help="FFT worker threads")
    parser.add_argument("--out-dir", default=None, help="output directory")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run a configured trajectory")
    simulate.add_argument("config", nargs="?", default=None)

    verify = sub.add_parser("verify", help="ratio tests for functional inequalities")
    verify.add_argument("inequality", help=f"one of {', '.join(INEQUALITIES)} or 'all'")
    verify.add_argument("--trials", type=int, default=settings.DEFAULT_TRIALS)
    verify.add_argument("--n", type=int, nargs="+", default=[1, 2, 3], choices=[1, 2, 3])

    sweep = sub.add_parser("sweep", help="run an experiment or sweep spec (JSON)")
    sweep.add_argument("spec")
    sweep.add_argument("--workers", type=int, default=settings.SWEEP_WORKERS)

    inspect = sub.add_parser("inspect", help="describe a snapshot file")
    inspect.add_argument("snapshot")
    return parser


def _exit_code(status: CheckStatus) -> int:
    return EXIT_CHECK_FAILED if status.is_failure else EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    path = args.config or settings.DEFAULT_CONFIG_PATH
    if args.config is not None and not Path(path).exists():
        logger.error(f"config file not found: {path}")
        return EXIT_CONFIG_ERROR
    config = SimConfig(path).config
    result = SimulationService(config, out_dir=args.out_dir, seed=args.seed).run()
    print(render_text(result.summary()))
    return _exit_code(result.status)


def cmd_verify(args: argparse.Namespace) -> int:
    ids: List[str] = list(INEQUALITIES) if args.inequality.lower() == "all" else [normalize_id(args.inequality)]
    seed = settings.DEFAULT_SEED if args.seed is None else args.seed
    summary = ExperimentSummary(name="verify")
    for key in ids:
        _, _, min_n = INEQUALITIES[key]
        for n in args.n:
            if n < min_n:
                continue
            sampler = SamplerSpec(n=n, dims=VERIFY_DIMS[n], seed=seed)
            summary.rows.append(verify_ratio(key, sampler, trials=args.trials).to_dict())
    print(render_text(summary))
    return _exit_code(summary.status)


def cmd_sweep(args: argparse.Namespace) -> int:
    out_dir = args.out_dir or settings.OUTPUT_DIRECTORY
    summary = run_spec_file(args.spec, out_dir, workers=args.workers)
    print(render_text(summary))
    return _exit_code(summary.status)


def cmd_inspect(args: argparse.Namespace) -> int:
    u, t = read_snapshot(args.snapshot)
    info = {
        "path": args.snapshot,
        "t": t,
        "n": u.grid.n,
        "m": u.target_dim,
        "dims": "x".join(str(d) for d in u.grid.dims),
        "box_lengths": ", ".join(f"{b:.6g}" for b in u.grid.box_lengths),
        "E": energy(u),
        "grad_seminorm": grad_seminorm(u),
        "constraint_drift": u.constraint_drift(),
    }
    if u.grid.n == 1 and u.components >= 2:
        info["winding_number"] = winding_number(u)
    print(render_text(info))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        with fft.set_workers(max(1, args.threads)):
            return COMMANDS[args.command](args)
    except (ConfigError, ParameterError, ValidationError) as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except FormatError as e:
        logger.error(f"unreadable file: {e}")
        return EXIT_CHECK_FAILED
    except HalfFlowError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
