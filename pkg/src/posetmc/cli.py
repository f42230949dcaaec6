"""Command-line entry point.

    posetmc run CONFIG [--out DIR] [--threads N]
    posetmc validate [--seed N] [--out DIR]

Exit codes: 0 success, 1 a validation suite failed, 2 usage or config error.
The default thread count comes from ``POSETMC_THREADS`` (else all CPUs).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from posetmc.diagnostics import write_csv
from posetmc.experiments import ConfigError, ExperimentConfig, parse_config, run_experiment
from posetmc.targets import DatasetError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("results"), help="directory for CSV output (default: results)")
    common.add_argument("--threads", type=int, default=None, help="worker threads for replicates")
    common.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p = argparse.ArgumentParser(prog="posetmc", description="Lifted MCMC samplers on partially ordered binary spaces.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run the experiment described by a config file")
    run.add_argument("config", type=Path)
    val = sub.add_parser("validate", parents=[common], help="run the exact oracle suites")
    val.add_argument("--seed", type=int, default=0, help="base seed of the random target battery")
    return p


def _output_path(cfg: ExperimentConfig, out: Path) -> Path:
    if cfg.output:
        path = Path(cfg.output)
        return path if path.is_absolute() else out / path
    return out / f"{cfg.experiment}.csv"


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.threads is not None and args.threads <= 0:
        print("posetmc: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
        else:
            if args.seed < 0:
                print("posetmc: --seed must be non-negative", file=sys.stderr)
                return EXIT_USAGE
            cfg = ExperimentConfig(experiment="validate", seed=args.seed)
        rows = run_experiment(cfg, threads=args.threads, log=log)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"posetmc: {line}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"posetmc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = write_csv(rows, _output_path(cfg, args.out))
    if log:
        log(f"wrote {path}")
    if cfg.experiment == "validate" and not all(r["passed"] for r in rows):
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
