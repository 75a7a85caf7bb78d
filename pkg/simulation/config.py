"""
Declarative experiment configuration.

Configs are YAML files with nested `rip`, `solver` and `bound` sections;
JSON is accepted as well. Every field has a default, so a config only
needs to name what differs. See configs/ for the canned experiments.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional
import hashlib
import json
import logging

import yaml

from analysis.tails import DIRECTIONS
from models.ensembles import Family
from models.exceptions import ConfigError

logger = logging.getLogger(__name__)


class Experiment(str, Enum):
    KAPPA_TABLE = "kappa"
    RIP_SWEEP = "rip"
    PHASE_TRANSITION = "phase"
    CONCENTRATION = "conc"
    TAILS = "tails"


MODES = ("centered", "uncentered", "both")
RIP_METHODS = ("auto", "exact", "greedy", "monte-carlo")
SOLVERS = ("iht", "fista")


@dataclass
class RipSettings:
    method: str = "auto"
    restarts: int = 20
    enumeration_budget: int = 2_000_000
    eig_crossover: int = 64


@dataclass
class SolverSettings:
    name: str = "iht"
    max_iters: int = 3000
    tol: float = 1e-10
    step: Optional[float] = None
    lam: Optional[float] = None
    continuation: bool = False
    rel_tol: float = 1e-3
    amplitude_model: str = "unit_signs"
    noise_sigma: float = 0.0
    # IHT steps tried by the pilot sweep; null stands for 0.9 / ||A||^2
    pilot_steps: List[Optional[float]] = field(default_factory=list)
    pilot_trials: int = 10


@dataclass
class BoundSettings:
    """Fit constants of the theory overlay; xi = None fits it from a psi_1 estimate"""

    C: float = 1.0
    xi: Optional[float] = None
    K: float = 1.0
    Kprime: float = 1.0
    theta_prime: float = 0.0
    c: float = 1.0


@dataclass
class ExperimentConfig:
    experiment: Experiment = Experiment.RIP_SWEEP
    family: str = "spherical"
    families: List[str] = field(default_factory=lambda: [f.value for f in Family])
    mode: str = "centered"
    n: Optional[int] = None
    n_list: List[int] = field(default_factory=lambda: [4])
    N: int = 16
    s_list: List[int] = field(default_factory=lambda: [1, 2])
    trials: int = 50
    samples: int = 100_000
    p_max: int = 8
    direction: str = "random-unit"
    t_grid: List[float] = field(default_factory=lambda: [0.5])
    seed: int = 0
    output: str = "results/experiment"
    jobs: Optional[int] = None
    rip: RipSettings = field(default_factory=RipSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    bound: BoundSettings = field(default_factory=BoundSettings)

    @property
    def dimensions(self) -> List[int]:
        """n values to sweep; `n` wins over `n_list` when both are set"""
        return [self.n] if self.n is not None else list(self.n_list)

    @property
    def modes(self) -> List[str]:
        return ["centered", "uncentered"] if self.mode == "both" else [self.mode]


_SECTIONS = {"rip": RipSettings, "solver": SolverSettings, "bound": BoundSettings}


def _build_section(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return cls(**data)


def _family_name(name: Any) -> str:
    return str(name).strip().lower()


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Build a config from a plain mapping, rejecting unknown keys"""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    values = dict(data)
    # same spelling rules as DistributionSpec.from_name
    if isinstance(values.get("family"), str):
        values["family"] = _family_name(values["family"])
    if isinstance(values.get("families"), list):
        values["families"] = [_family_name(name) for name in values["families"]]
    for name, cls in _SECTIONS.items():
        values[name] = _build_section(cls, values.get(name), name)
    if "experiment" in values:
        try:
            values["experiment"] = Experiment(values["experiment"])
        except ValueError:
            choices = ", ".join(e.value for e in Experiment)
            raise ConfigError(
                f"unknown experiment {values['experiment']!r} (expected one of {choices})"
            ) from None
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    data = asdict(config)
    data["experiment"] = config.experiment.value
    return data


def load_config(path: str) -> ExperimentConfig:
    """Read a YAML (or .json) config file"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(config: ExperimentConfig, path: str) -> None:
    path = Path(path)
    data = config_to_dict(config)
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")


def apply_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    jobs: Optional[int] = None,
    mode: Optional[str] = None,
) -> ExperimentConfig:
    """Copy of `config` with the CLI overrides that were given"""
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["output"] = out
    if jobs is not None:
        changes["jobs"] = jobs
    if mode is not None:
        changes["mode"] = mode
    return replace(config, **changes)


def config_hash(config: ExperimentConfig) -> str:
    """
    Content hash of everything that influences results.

    Output path and parallelism degree are excluded: they never change a row.
    """
    data = config_to_dict(config)
    data.pop("output", None)
    data.pop("jobs", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def row_seed(seed: int, *coords: Any) -> int:
    """Deterministic 63-bit seed for the row at `coords` of a sweep"""
    key = ":".join([str(int(seed))] + [str(c) for c in coords])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def _validate_bound(bound: BoundSettings) -> None:
    """Same constraints as TheoryBoundParams, reported as ConfigError"""
    if bound.C <= 0:
        raise ConfigError("bound.C must be positive")
    if bound.xi is not None and bound.xi <= 0:
        raise ConfigError("bound.xi must be positive")
    if bound.K < 1 or bound.Kprime < 1:
        raise ConfigError("bound.K and bound.Kprime must be >= 1")
    if not 0 <= bound.theta_prime < 1:
        raise ConfigError("bound.theta_prime must lie in [0, 1)")
    if not 0 < bound.c <= 1:
        raise ConfigError("bound.c must lie in (0, 1]")


def _validate_solver(solver: SolverSettings) -> None:
    if solver.name not in SOLVERS:
        raise ConfigError(f"solver.name must be one of {SOLVERS}")
    if solver.amplitude_model not in ("unit_signs", "gaussian_amps"):
        raise ConfigError("solver.amplitude_model must be unit_signs or gaussian_amps")
    if solver.noise_sigma < 0:
        raise ConfigError("solver.noise_sigma must be non-negative")
    if solver.max_iters < 1:
        raise ConfigError("solver.max_iters must be >= 1")
    for name in ("tol", "rel_tol"):
        if getattr(solver, name) <= 0:
            raise ConfigError(f"solver.{name} must be positive")
    for name in ("step", "lam"):
        value = getattr(solver, name)
        if value is not None and value <= 0:
            raise ConfigError(f"solver.{name} must be positive when given")
    if any(step is not None and step <= 0 for step in solver.pilot_steps):
        raise ConfigError("solver.pilot_steps must hold positive steps or null")
    if solver.pilot_steps and solver.name != "iht":
        raise ConfigError("solver.pilot_steps only applies to iht")
    if solver.pilot_trials < 1:
        raise ConfigError("solver.pilot_trials must be >= 1")


def validate(config: ExperimentConfig) -> ExperimentConfig:
    """
    Check every parameter before any computation starts.

    Raises:
        ConfigError: describing the first problem found
    """
    family_names = {f.value for f in Family}
    if config.family not in family_names:
        raise ConfigError(f"unknown family {config.family!r}")
    for name in config.families:
        if name not in family_names:
            raise ConfigError(f"unknown family {name!r} in families")
    if config.experiment == Experiment.KAPPA_TABLE and not config.families:
        raise ConfigError("families must not be empty")
    if config.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {config.mode!r}")

    dims = config.dimensions
    if not dims:
        raise ConfigError("n or n_list must be given")
    if any(int(n) < 2 for n in dims):
        raise ConfigError(f"every n must be >= 2 (kappa is undefined below), got {dims}")
    if config.N < 1:
        raise ConfigError("N must be >= 1")
    if config.trials < 1 or config.samples < 1:
        raise ConfigError("trials and samples must be >= 1")
    if config.p_max < 2:
        raise ConfigError("p_max must be >= 2")
    if not config.t_grid or any(t <= 0 for t in config.t_grid):
        raise ConfigError("t_grid must contain positive values")
    if any(b <= a for a, b in zip(config.t_grid, config.t_grid[1:])):
        raise ConfigError("t_grid must be strictly increasing")
    if config.seed < 0:
        raise ConfigError("seed must be non-negative")
    if config.jobs is not None and config.jobs == 0:
        raise ConfigError("jobs must be a non-zero integer")

    if config.experiment in (Experiment.RIP_SWEEP, Experiment.PHASE_TRANSITION):
        if not config.s_list:
            raise ConfigError("s_list must not be empty")
        bad = [s for s in config.s_list if not 1 <= s <= config.N]
        if bad:
            raise ConfigError(f"sparsities {bad} outside [1, N={config.N}]")

    if config.experiment == Experiment.RIP_SWEEP:
        if config.rip.method not in RIP_METHODS:
            raise ConfigError(f"rip.method must be one of {RIP_METHODS}")
        if config.rip.restarts < 1:
            raise ConfigError("rip.restarts must be >= 1")
        if config.rip.enumeration_budget < 1 or config.rip.eig_crossover < 1:
            raise ConfigError("rip.enumeration_budget and rip.eig_crossover must be >= 1")
        for n in dims:
            if config.N < n * n:
                raise ConfigError(
                    f"N={config.N} < n^2={n * n}: the sparsity budget assumes n^2 <= N"
                )
        _validate_bound(config.bound)

    if config.experiment == Experiment.PHASE_TRANSITION:
        _validate_solver(config.solver)
        if config.solver.pilot_steps and config.mode != "both":
            raise ConfigError("solver.pilot_steps compares both modes; set mode: both")
        if config.trials < 20:
            logger.warning("phase transition with %d trials per point (20+ recommended)", config.trials)

    if config.experiment == Experiment.TAILS:
        if config.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}")
    return config
