from .rip import (
    Method,
    RipEstimate,
    SupportSet,
    TheoryBoundParams,
    column_norm_deviation,
    delta_exact,
    delta_greedy,
    delta_monte_carlo,
    sparsity_budget,
    theory_bound,
)
from .recovery import RecoveryProblem, RecoveryResult, fista_lasso, iht, success, synth_problem
from .tails import MarginalSampleSet, TailReport, norm_concentration_experiment, sample_marginals

__all__ = [
    "Method",
    "RipEstimate",
    "SupportSet",
    "TheoryBoundParams",
    "column_norm_deviation",
    "delta_exact",
    "delta_greedy",
    "delta_monte_carlo",
    "sparsity_budget",
    "theory_bound",
    "RecoveryProblem",
    "RecoveryResult",
    "fista_lasso",
    "iht",
    "success",
    "synth_problem",
    "MarginalSampleSet",
    "TailReport",
    "norm_concentration_experiment",
    "sample_marginals",
]
