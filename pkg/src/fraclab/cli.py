"""Command line entry point: ``fraclab <experiment> --config PATH --out DIR``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for a
configuration error (nothing is written), 3 for a numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import io
from .config import EXPERIMENTS, load_config
from .exceptions import ConfigError, FraclabError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("fraclab")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="fraclab", description="Run a named fraclab experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, type=Path, help="YAML experiment config")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
    p.add_argument("--parallel", action="store_true", help="run independent checks in parallel")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _metadata(cfg, runtime, timings):
    return {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "runtime_s": runtime,
        "timings_s": timings,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def run(experiment, config_path, out, seed=None, parallel=False):
    """Run one experiment and write its results; returns the exit status."""
    from .experiments import EXPERIMENT_RUNNERS, run_suite_experiment

    try:
        cfg = load_config(config_path, experiment, seed)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        if experiment == "suite":
            report, artifacts, results = run_suite_experiment(cfg, parallel=parallel)
            for r in results:
                print(r.line())
        else:
            report, artifacts = EXPERIMENT_RUNNERS[experiment](cfg)
    except (FraclabError, np.linalg.LinAlgError, ValueError) as exc:
        log.error("numerical failure: %s: %s", type(exc).__name__, exc)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "results.json", {
            "experiment": experiment,
            "config": cfg.model_dump(),
            "passed": False,
            "error": {"type": type(exc).__name__, "message": str(exc)},
        })
        return EXIT_NUMERICAL
    runtime = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, writer in artifacts:
        writer(out / name)
        names.append(name)
    results = {"experiment": experiment, "config": cfg.model_dump(), "artifacts": names}
    results.update(report.to_dict())
    io.write_json(out / "results.json", results)
    io.write_json(out / "metadata.json", _metadata(cfg, runtime, report.timings))
    for name in report.failed_checks():
        log.warning("check failed: %s", name)
    print(f"{experiment}: {'PASS' if report.passed else 'FAIL'} ({len(report.checks)} checks) -> {out}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.experiment, args.config, args.out, args.seed, args.parallel)


if __name__ == "__main__":
    sys.exit(main())
