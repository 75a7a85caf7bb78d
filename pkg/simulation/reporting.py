"""
Writes experiment reports to disk.

Each run produces three files next to each other:
    <out>.csv          rows, fixed column order and float format
    <out>.json         config echo, metadata, rows and JSON-only details
    <out>_summary.txt  tabulate summary, as printed on the console

Only the CSV is guaranteed byte-identical across reruns; the JSON and
summary carry wall-clock time and the generation timestamp.
"""

from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List
import json
import logging
import math

import numpy as np
from tabulate import tabulate

from models.exceptions import ConfigError

from .config import Experiment, config_to_dict
from .experiments import ExperimentReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"

# Column order of the CSV files, per experiment
CSV_COLUMNS: Dict[str, List[str]] = {
    "kappa": ["family", "n", "kappa_analytic", "kappa_mc", "rel_gap", "samples", "seed"],
    "rip": [
        "s", "method", "delta", "theory_bound", "sparsity_budget", "n", "N",
        "family", "mode", "seed", "witness", "downgraded",
    ],
    "phase": [
        "family", "mode", "n", "N", "s", "solver", "noise_sigma", "seed",
        "success", "iterations", "residual",
    ],
    "conc": [
        "family", "n", "t", "frequency", "trials", "side_condition_ok", "tail_bound",
        "identity_error", "min_a_term", "min_c_term", "seed",
    ],
    "tails": [
        "family", "n", "direction", "samples", "p_max", "psi1", "psi2",
        "centered_second_moment", "raw_second_moment", "seed",
    ],
}


def _jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def csv_text(report: ExperimentReport) -> str:
    """The CSV body of a report, deterministic for identical rows"""
    columns = CSV_COLUMNS[report.config.experiment.value]
    frame = report.rows[[c for c in columns if c in report.rows.columns]]
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def summary_table(report: ExperimentReport) -> str:
    frame = report.summary if report.summary is not None else report.rows
    return tabulate(frame, headers="keys", tablefmt="grid", showindex=False, floatfmt=".4g")


class ExperimentReporter:
    """Writes an ExperimentReport as CSV, JSON and a text summary"""

    def __init__(self, output: str):
        """
        Args:
            output: Path prefix; parent directories are created
        """
        self.prefix = Path(output)
        self.prefix.parent.mkdir(parents=True, exist_ok=True)
        self.csv_file = self.prefix.with_name(self.prefix.name + ".csv")
        self.json_file = self.prefix.with_name(self.prefix.name + ".json")
        self.summary_file = self.prefix.with_name(self.prefix.name + "_summary.txt")

    def write(self, report: ExperimentReport) -> None:
        self.csv_file.write_text(csv_text(report), encoding="utf-8")

        payload = {
            "experiment": report.config.experiment.value,
            "config": config_to_dict(report.config),
            "config_hash": report.config_hash,
            "version": report.version,
            "wall_clock_seconds": report.wall_clock,
            "generated": datetime.now().isoformat(timespec="seconds"),
            "metadata": report.metadata,
            "rows": report.rows.to_dict(orient="records"),
            "summary": None if report.summary is None else report.summary.to_dict(orient="records"),
            "details": report.details,
        }
        self.json_file.write_text(
            json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8"
        )

        with open(self.summary_file, "w", encoding="utf-8") as f:
            f.write(f"{report.config.experiment.value.upper()} EXPERIMENT - SUMMARY\n")
            f.write(f"Generated on: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
            f.write(f"Config hash: {report.config_hash}\n\n")
            f.write(summary_table(report))
            f.write("\n\n")
            for key, value in report.metadata.items():
                f.write(f"{key}: {json.dumps(_jsonable(value))}\n")

        logger.info("wrote %s, %s, %s", self.csv_file, self.json_file, self.summary_file)


def write_report(report: ExperimentReport, output: str = None, echo: bool = True) -> ExperimentReporter:
    """Write all report files and optionally print the summary table"""
    reporter = ExperimentReporter(output or report.config.output)
    reporter.write(report)
    if echo:
        print(summary_table(report))
        for key, value in report.metadata.items():
            print(f"{key}: {json.dumps(_jsonable(value))}")
        print(f"CSV: {reporter.csv_file}")
    return reporter


def separation_record(report: ExperimentReport) -> Dict[str, Any]:
    """
    The reproducible part of a phase-transition report: the sweep it came
    from, the IHT step in use and s* per n. Rerunning the same config gives
    the same record.
    """
    config = report.config
    if config.experiment != Experiment.PHASE_TRANSITION:
        raise ConfigError("a separation record needs a phase experiment")
    return _jsonable(
        {
            "sweep": {
                "family": config.family,
                "n": config.dimensions,
                "N": config.N,
                "s_list": config.s_list,
                "trials": config.trials,
                "seed": config.seed,
                "pilot_steps": config.solver.pilot_steps,
                "pilot_trials": config.solver.pilot_trials,
            },
            "step": report.metadata.get("step"),
            "separation": report.metadata["separation"],
        }
    )


def write_separation_record(report: ExperimentReport, path: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(separation_record(report), indent=2) + "\n", encoding="utf-8")
    logger.info("recorded s* in %s", path)
    return path
