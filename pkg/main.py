#!/usr/bin/env python3
"""
Centered Khatri-Rao RIP benchmark

Runs one of the canned experiments (kappa table, RIP sweep, phase
transition, column-norm concentration, marginal tails) from a YAML
config and writes CSV, JSON and a text summary.
"""

from dataclasses import replace
import argparse
import logging
import sys

from models.exceptions import (
    ConfigError,
    DimensionError,
    DistributionError,
    InfeasibleError,
    KrRipError,
)
from simulation.config import Experiment, ExperimentConfig, apply_overrides, load_config, validate
from simulation.experiments import run_experiment
from simulation.reporting import write_report, write_separation_record

logger = logging.getLogger("kr_rip")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

SUBCOMMANDS = {
    "kappa": "Analytic vs Monte-Carlo kappa(n) per family",
    "rip": "delta_s against s with the theory bound overlaid",
    "phase": "Recovery success rates, centered vs uncentered",
    "conc": "Column-norm concentration frequencies",
    "tails": "psi_1 estimates of the centered marginals",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Centered Khatri-Rao RIP benchmark")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML (or .json) experiment config")
        p.add_argument("--seed", type=int, help="Override the config seed")
        p.add_argument("--out", help="Output path prefix (writes <out>.csv, <out>.json)")
        p.add_argument("--jobs", type=int, help="Worker count (default: all cores)")
        p.add_argument(
            "--mode", choices=["centered", "uncentered", "both"], help="Override the operator mode"
        )
        p.add_argument(
            "--strict",
            action="store_true",
            help="Fail instead of downgrading infeasible exact enumeration",
        )
        p.add_argument("--progress", action="store_true", help="Show progress bars")
        if name == "phase":
            p.add_argument(
                "--golden", metavar="PATH", help="Also write the s* record (JSON) to PATH"
            )
        p.add_argument(
            "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
        )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with the subcommand and CLI overrides applied"""
    experiment = Experiment(args.command)
    if args.config:
        config = load_config(args.config)
        if config.experiment != experiment:
            raise ConfigError(
                f"config {args.config} describes a {config.experiment.value!r} experiment, "
                f"not {experiment.value!r}"
            )
    else:
        config = ExperimentConfig(experiment=experiment, output=f"results/{experiment.value}")
    config = replace(config, experiment=experiment)
    config = apply_overrides(config, seed=args.seed, out=args.out, jobs=args.jobs, mode=args.mode)
    return validate(config)


def main(argv=None) -> int:
    """Parse arguments, run the experiment and map failures to exit codes"""
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    progress = args.progress and sys.stderr.isatty()

    try:
        config = resolve_config(args)
        report = run_experiment(config, strict=args.strict, progress=progress)
        write_report(report)
        if getattr(args, "golden", None):
            write_separation_record(report, args.golden)
    except (ConfigError, DimensionError, DistributionError) as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        logger.error("infeasible under --strict: %s", exc)
        return EXIT_INFEASIBLE
    except KrRipError as exc:
        logger.error("%s", exc)
        return EXIT_ERROR

    print(f"\n{args.command} finished in {report.wall_clock:.1f}s (config {report.config_hash})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
