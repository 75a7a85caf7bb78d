from .config import ExperimentConfig, load_config, validate
from .experiments import ExperimentReport, run_experiment
from .reporting import ExperimentReporter, write_report, write_separation_record

__all__ = [
    "ExperimentConfig",
    "load_config",
    "validate",
    "ExperimentReport",
    "run_experiment",
    "ExperimentReporter",
    "write_report",
    "write_separation_record",
]
