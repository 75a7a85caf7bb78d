"""
Canned experiments: kappa table, RIP sweep, phase transition, column-norm
concentration and marginal tails.

Every row is computed from its own seed, derived from the config seed and
the row coordinates, so a row can be regenerated alone and the result
does not depend on the number of workers.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple
import logging
import math
import time

import numpy as np
import pandas as pd
from scipy.special import comb

from analysis import recovery, rip, tails
from models import __version__
from models.ensembles import DistributionSpec, sample_matrix
from models.exceptions import InfeasibleError
from models.kr_operator import Mode, build, kappa, kappa_monte_carlo

from .config import (
    Experiment,
    ExperimentConfig,
    config_hash,
    row_seed,
    validate,
)
from .parallel import resolve_jobs, run_tasks

logger = logging.getLogger(__name__)

# samples used to fit psi_1 when the bound overlay needs xi
_XI_FIT_SAMPLES = 20_000

# metadata label of the IHT step when none is configured
DEFAULT_STEP_LABEL = "0.9/||A||^2"


@dataclass
class ExperimentReport:
    """
    Tabular result of one experiment.

    Attributes:
        config: The validated config that produced the rows
        rows: One row per result, each with the seed that regenerates it
        metadata: Derived quantities (s*, ratios, fitted constants, ...)
        summary: Optional aggregated table (e.g. success-rate grid)
        details: Extra JSON-only records (tail curves)
        wall_clock: Seconds spent, JSON only
    """

    config: ExperimentConfig
    rows: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)
    summary: Optional[pd.DataFrame] = None
    details: List[Dict[str, Any]] = field(default_factory=list)
    wall_clock: float = 0.0
    version: str = __version__

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)


# Kappa table


def _kappa_task(task: Tuple[str, int, int, int]) -> Dict[str, Any]:
    family, n, samples, seed = task
    spec = DistributionSpec.from_name(family)
    analytic = kappa(spec, n)
    estimate = kappa_monte_carlo(spec, n, samples, seed)
    return {
        "family": family,
        "n": n,
        "kappa_analytic": analytic,
        "kappa_mc": estimate,
        "rel_gap": abs(estimate - analytic) / analytic,
        "samples": samples,
        "seed": seed,
    }


def run_kappa_table(config: ExperimentConfig, progress: bool = False) -> ExperimentReport:
    """Analytic kappa(n) against its Monte-Carlo estimate per (family, n)"""
    validate(config)
    started = time.perf_counter()
    tasks = [
        (family, n, config.samples, row_seed(config.seed, "kappa", family, n))
        for family in config.families
        for n in config.dimensions
    ]
    rows = run_tasks(_kappa_task, tasks, config.jobs, progress, desc="kappa")
    frame = pd.DataFrame(rows)
    return ExperimentReport(
        config=config,
        rows=frame,
        metadata={"max_rel_gap": float(frame["rel_gap"].max())},
        wall_clock=time.perf_counter() - started,
    )


# RIP sweep


def fitted_xi(spec: DistributionSpec, n: int, settings, seed: int) -> float:
    """xi = psi K + K' with psi the psi_1 moment estimate of random marginals"""
    if settings.xi is not None:
        return settings.xi
    direction = tails.unit_direction(n, "random-unit", seed)
    marginals = tails.sample_marginals(spec, n, direction, _XI_FIT_SAMPLES, seed, "random-unit")
    psi = tails.psi_alpha_estimate(marginals, alpha=1, p_max=8)
    return psi * settings.K + settings.Kprime


def _rip_task(task: Dict[str, Any]) -> Dict[str, Any]:
    config: ExperimentConfig = task["config"]
    n, s, mode, op_seed = task["n"], task["s"], task["mode"], task["op_seed"]
    spec = DistributionSpec.from_name(config.family)
    op = build(sample_matrix(spec, n, config.N, op_seed), Mode(mode))
    settings = config.rip
    estimate_seed = row_seed(op_seed, "support", s)

    method = settings.method
    downgraded = False
    if method in ("auto", "exact"):
        supports = int(comb(config.N, s, exact=True))
        if supports <= settings.enumeration_budget:
            method = "exact"
        else:
            downgraded = True
            method = "greedy"
            logger.warning(
                "C(%d, %d) = %d supports exceeds the enumeration budget; "
                "reporting the greedy lower bound", config.N, s, supports,
            )

    if method == "exact":
        estimate = rip.delta_exact(
            op, s, budget=settings.enumeration_budget, crossover=settings.eig_crossover
        )
    elif method == "greedy":
        estimate = rip.delta_greedy(
            op, s, settings.restarts, estimate_seed, crossover=settings.eig_crossover
        )
    else:
        estimate = rip.delta_monte_carlo(
            op, s, config.trials, estimate_seed, crossover=settings.eig_crossover
        )

    m = n * n
    params = rip.TheoryBoundParams(
        C=config.bound.C,
        xi=task["xi"],
        K=config.bound.K,
        Kprime=config.bound.Kprime,
        theta_prime=config.bound.theta_prime,
        c_xi_delta=config.bound.c,
    )
    bound = rip.theory_bound(s, m, config.N, params) if s <= min(config.N, m) else math.nan
    return {
        "s": s,
        "method": estimate.method.value,
        "delta": estimate.delta,
        "theory_bound": bound,
        "sparsity_budget": rip.sparsity_budget(n, config.N, config.bound.c),
        "n": n,
        "N": config.N,
        "family": config.family,
        "mode": mode,
        "seed": op_seed,
        "witness": " ".join(str(i) for i in estimate.witness.indices),
        "downgraded": downgraded,
    }


def run_rip_sweep(
    config: ExperimentConfig, strict: bool = False, progress: bool = False
) -> ExperimentReport:
    """
    delta_s against s with the theory bound and sparsity budget overlaid.

    Both modes share the same source matrix per n. Exact enumeration that
    exceeds the budget is downgraded to the greedy lower bound with a
    warning, or raises InfeasibleError when `strict`.
    """
    validate(config)
    started = time.perf_counter()
    spec = DistributionSpec.from_name(config.family)

    if strict and config.rip.method in ("auto", "exact"):
        for s in config.s_list:
            supports = int(comb(config.N, s, exact=True))
            if supports > config.rip.enumeration_budget:
                raise InfeasibleError(
                    f"exact delta_{s} needs C({config.N}, {s}) = {supports} supports, "
                    f"budget is {config.rip.enumeration_budget}"
                )

    xi_by_n = {}
    tasks = []
    for n in config.dimensions:
        op_seed = row_seed(config.seed, "rip", n, config.N)
        xi_by_n[n] = fitted_xi(spec, n, config.bound, op_seed)
        for mode in config.modes:
            for s in config.s_list:
                tasks.append(
                    {
                        "config": config,
                        "n": n,
                        "s": s,
                        "mode": mode,
                        "op_seed": op_seed,
                        "xi": xi_by_n[n],
                    }
                )
    rows = run_tasks(_rip_task, tasks, config.jobs, progress, desc="rip")
    frame = pd.DataFrame(rows)
    return ExperimentReport(
        config=config,
        rows=frame,
        metadata={
            "xi": {str(n): xi for n, xi in xi_by_n.items()},
            "downgraded_rows": int(frame["downgraded"].sum()),
        },
        wall_clock=time.perf_counter() - started,
    )


# Phase transition


def solve(problem: recovery.RecoveryProblem, s: int, settings) -> recovery.RecoveryResult:
    """Run the configured solver on one problem"""
    if settings.name == "fista":
        return recovery.fista_lasso(
            problem,
            lam=settings.lam,
            max_iters=settings.max_iters,
            tol=settings.tol,
            continuation=settings.continuation,
        )
    return recovery.iht(
        problem, s, max_iters=settings.max_iters, tol=settings.tol, step=settings.step
    )


def _phase_task(task: Dict[str, Any]) -> Dict[str, Any]:
    config: ExperimentConfig = task["config"]
    n, s, mode, seed = task["n"], task["s"], task["mode"], task["seed"]
    settings = replace(config.solver, step=task["step"])
    spec = DistributionSpec.from_name(config.family)
    op = build(sample_matrix(spec, n, config.N, seed), Mode(mode))
    problem = recovery.synth_problem(
        op, s, recovery.AmplitudeModel(settings.amplitude_model), settings.noise_sigma, seed
    )
    result = solve(problem, s, settings)
    return {
        "family": config.family,
        "mode": mode,
        "n": n,
        "N": config.N,
        "s": s,
        "solver": settings.name,
        "noise_sigma": settings.noise_sigma,
        "seed": seed,
        "success": recovery.success(result, problem, settings.rel_tol),
        "iterations": result.iterations,
        "residual": result.residual_norm,
    }


def _phase_sweep(
    config: ExperimentConfig, step: Optional[float], stage: str, trials: int, progress: bool
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Trial rows and the success-rate grid for one step; `stage` keys the seeds"""
    tasks = [
        {
            "config": config,
            "n": n,
            "s": s,
            "mode": mode,
            "step": step,
            "seed": row_seed(config.seed, stage, n, s, trial),
        }
        for mode in config.modes
        for n in config.dimensions
        for s in config.s_list
        for trial in range(trials)
    ]
    rows = run_tasks(_phase_task, tasks, config.jobs, progress, desc=stage)
    frame = pd.DataFrame(rows)
    summary = (
        frame.groupby(["mode", "n", "s"], sort=True)
        .agg(
            success_rate=("success", "mean"),
            trials=("success", "size"),
            mean_iterations=("iterations", "mean"),
        )
        .reset_index()
    )
    return frame, summary


def separation_sparsity(summary: pd.DataFrame) -> Dict[int, Dict[str, float]]:
    """
    Per n, the s where the centered success rate exceeds the uncentered
    one the most (ties to the smallest s).
    """
    out = {}
    for n, group in summary.groupby("n"):
        grid = group.pivot(index="s", columns="mode", values="success_rate")
        if not {"centered", "uncentered"} <= set(grid.columns):
            continue
        gap = (grid["centered"] - grid["uncentered"]).sort_index()
        s_star = int(gap.idxmax())
        out[int(n)] = {
            "s_star": s_star,
            "separation": float(gap.loc[s_star]),
            "centered_rate": float(grid.loc[s_star, "centered"]),
            "uncentered_rate": float(grid.loc[s_star, "uncentered"]),
        }
    return out


def _step_label(step: Optional[float]) -> Any:
    return DEFAULT_STEP_LABEL if step is None else step


def pilot_step(
    config: ExperimentConfig, progress: bool = False
) -> Tuple[Optional[float], List[Dict[str, Any]]]:
    """
    IHT step from `solver.pilot_steps` with the largest separation.

    Every candidate is run on the same pilot problems (`solver.pilot_trials`
    per point), which are seeded apart from the main sweep. Ties go to the
    candidate listed first.

    Returns:
        The chosen step and one record per candidate
    """
    records = []
    best_step, best_gap = config.solver.step, -math.inf
    for step in config.solver.pilot_steps:
        _, summary = _phase_sweep(config, step, "pilot", config.solver.pilot_trials, progress)
        separation = separation_sparsity(summary)
        gap = max((info["separation"] for info in separation.values()), default=-math.inf)
        logger.info("pilot step %s: best separation %.2f", _step_label(step), gap)
        records.append(
            {
                "step": _step_label(step),
                "separation": gap,
                "by_n": {str(n): info for n, info in separation.items()},
            }
        )
        if gap > best_gap:
            best_step, best_gap = step, gap
    return best_step, records


def run_phase_transition(config: ExperimentConfig, progress: bool = False) -> ExperimentReport:
    """
    Monte-Carlo success rates over (s, n) for each mode.

    Trial k at (n, s) uses the same source matrix and the same sparse
    vector in both modes, so the two rates are paired. With
    `solver.pilot_steps` the IHT step is picked by `pilot_step` first.
    """
    validate(config)
    started = time.perf_counter()
    step, pilot = config.solver.step, []
    if config.solver.pilot_steps:
        step, pilot = pilot_step(config, progress)
    frame, summary = _phase_sweep(config, step, "phase", config.trials, progress)

    solver = recovery.FISTA_LABEL if config.solver.name == "fista" else recovery.IHT_LABEL
    separation = separation_sparsity(summary)
    for n, info in separation.items():
        logger.info(
            "n=%d: s*=%d, centered %.2f vs uncentered %.2f",
            n, info["s_star"], info["centered_rate"], info["uncentered_rate"],
        )
    metadata = {"solver": solver, "separation": {str(n): v for n, v in separation.items()}}
    if config.solver.name == "iht":
        metadata["step"] = _step_label(step)
    if pilot:
        metadata["pilot"] = pilot
    return ExperimentReport(
        config=config,
        rows=frame,
        summary=summary,
        metadata=metadata,
        wall_clock=time.perf_counter() - started,
    )


# Column-norm concentration


def run_concentration(config: ExperimentConfig) -> ExperimentReport:
    """Frequency of max column-norm deviation >= t per (n, t)"""
    validate(config)
    started = time.perf_counter()
    spec = DistributionSpec.from_name(config.family)
    seed = row_seed(config.seed, "conc")
    frame = tails.norm_concentration_experiment(
        spec, config.dimensions, config.N, config.trials, config.t_grid, seed,
        jobs=resolve_jobs(config.jobs),
    )
    frame.insert(0, "family", config.family)
    frame["seed"] = seed
    identity = frame["identity_error"].dropna()
    return ExperimentReport(
        config=config,
        rows=frame,
        metadata={"max_identity_error": float(identity.max()) if len(identity) else None},
        wall_clock=time.perf_counter() - started,
    )


# Marginal tails


def _tails_task(task: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    config: ExperimentConfig = task["config"]
    n, seed = task["n"], task["seed"]
    spec = DistributionSpec.from_name(config.family)
    direction = tails.unit_direction(n, config.direction, seed)
    marginals = tails.sample_marginals(spec, n, direction, config.samples, seed, config.direction)
    report = tails.tail_report(marginals, config.t_grid, alpha=1, p_max=config.p_max)

    Y = direction.reshape(n, n)
    spectral = float(np.linalg.norm(Y, 2))
    root_kappa = math.sqrt(kappa(spec, n))
    report.extra["hanson_wright_bound"] = [
        [t, tails.hanson_wright_bound(t / root_kappa, spec.psi2_bound, 1.0, spectral)]
        for t in config.t_grid
    ]
    raw = tails.raw_second_moment(
        spec, n, tails.unit_direction(n, "vec-identity"), config.samples, seed
    )
    row = {
        "family": config.family,
        "n": n,
        "direction": config.direction,
        "samples": config.samples,
        "p_max": config.p_max,
        "psi1": report.psi_alpha_estimate,
        "psi2": tails.psi_alpha_estimate(marginals, alpha=2, p_max=config.p_max),
        "centered_second_moment": float(np.mean(marginals.samples ** 2)),
        "raw_second_moment": raw,
        "seed": seed,
    }
    return row, report.to_dict()


def run_tails(config: ExperimentConfig, progress: bool = False) -> ExperimentReport:
    """
    psi_1 estimates of centered marginals per n, side by side with the
    second moment of the raw quadratic form along vec(I)/sqrt(n).
    """
    validate(config)
    started = time.perf_counter()
    tasks = [
        {"config": config, "n": n, "seed": row_seed(config.seed, "tails", n)}
        for n in config.dimensions
    ]
    results = run_tasks(_tails_task, tasks, config.jobs, progress, desc="tails")
    frame = pd.DataFrame([row for row, _ in results])
    psi = frame["psi1"]
    raw = frame["raw_second_moment"]
    return ExperimentReport(
        config=config,
        rows=frame,
        details=[detail for _, detail in results],
        metadata={
            "psi1_ratio": float(psi.max() / psi.min()),
            "raw_second_moment_growth": float(raw.iloc[-1] / raw.iloc[0]),
        },
        wall_clock=time.perf_counter() - started,
    )


def run_experiment(
    config: ExperimentConfig, strict: bool = False, progress: bool = False
) -> ExperimentReport:
    """Dispatch on config.experiment"""
    if config.experiment == Experiment.KAPPA_TABLE:
        return run_kappa_table(config, progress)
    if config.experiment == Experiment.RIP_SWEEP:
        return run_rip_sweep(config, strict, progress)
    if config.experiment == Experiment.PHASE_TRANSITION:
        return run_phase_transition(config, progress)
    if config.experiment == Experiment.CONCENTRATION:
        return run_concentration(config)
    return run_tails(config, progress)
