"""
Empirical checks of the heavy-tail behavior of centered KR columns.

Marginals <A_i, y> of a centered column are centered quadratic forms
sqrt(kappa) (a^T Y a - tr Y). They are sub-exponential with a psi_1 norm
that does not depend on n; the estimators here measure that through
moment ratios and empirical survival curves, and replay the column-norm
concentration experiment with its exact algebraic split.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from models.ensembles import (
    MARGINAL_STREAM,
    ColumnMatrix,
    DistributionSpec,
    fourth_moment,
    sample_block,
    substream,
)
from models.exceptions import DimensionError, DistributionError
from models.kr_operator import Mode, build, column_sq_norms, kappa

from .rip import column_norm_deviation

logger = logging.getLogger(__name__)

CONCENTRATION_STREAM = MARGINAL_STREAM + 1
DIRECTION_STREAM = MARGINAL_STREAM + 2
_BLOCK = 65536
MIN_EXCEEDANCES = 10

DIRECTIONS = ("random-unit", "vec-identity", "vec-identity-complement", "basis")


@dataclass
class MarginalSampleSet:
    """Draws of Z = <A_i, y> for one fixed unit direction y"""

    samples: np.ndarray
    spec: DistributionSpec
    n: int
    y_descriptor: str
    y: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass
class TailReport:
    psi_alpha_estimate: float
    alpha: int
    moment_curve: List[Tuple[int, float]]
    tail_curve: List[Tuple[float, float, bool]]
    samples: int
    p_max: int
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "psi_alpha_estimate": self.psi_alpha_estimate,
            "alpha": self.alpha,
            "moment_curve": [[p, v] for p, v in self.moment_curve],
            "tail_curve": [
                [t, None if math.isinf(v) else v, ok] for t, v, ok in self.tail_curve
            ],
            "samples": self.samples,
            "p_max": self.p_max,
            **self.extra,
        }


def unit_direction(n: int, descriptor: str = "random-unit", seed: int = 0) -> np.ndarray:
    """
    A unit vector in R^{n^2} used as marginal direction.

    random-unit: uniform on the sphere; vec-identity: vec(I)/sqrt(n);
    vec-identity-complement: random unit vector orthogonal to vec(I);
    basis: vec(e_1 e_1^T).
    """
    m = n * n
    if descriptor == "vec-identity":
        return np.eye(n).ravel() / np.sqrt(n)
    if descriptor == "basis":
        y = np.zeros(m)
        y[0] = 1.0
        return y
    if descriptor not in DIRECTIONS:
        raise ValueError(f"unknown direction {descriptor!r}, expected one of {DIRECTIONS}")

    y = substream(seed, DIRECTION_STREAM, n).standard_normal(m)
    if descriptor == "vec-identity-complement":
        e = np.eye(n).ravel() / np.sqrt(n)
        y -= (y @ e) * e
    return y / np.linalg.norm(y)


def _quadratic_forms(spec, n, Y, trials, seed) -> np.ndarray:
    """a^T Y a for `trials` fresh columns, drawn in fixed-size blocks"""
    out = np.empty(trials)
    for block, start in enumerate(range(0, trials, _BLOCK)):
        count = min(_BLOCK, trials - start)
        A = sample_block(spec, n, count, substream(seed, MARGINAL_STREAM, n, block))
        out[start:start + count] = np.einsum("ij,ij->j", A, Y @ A)
    return out


def sample_marginals(
    spec: DistributionSpec,
    n: int,
    y: np.ndarray,
    trials: int,
    seed: int,
    y_descriptor: str = "custom",
) -> MarginalSampleSet:
    """
    Draw sqrt(kappa) (a^T Y a - tr Y) with Y the n x n reshape of y.

    Raises:
        ValueError: y is not a unit vector of length n^2, or trials < 1
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (n * n,):
        raise DimensionError(f"direction must have length {n * n}, got {y.shape}")
    if abs(np.linalg.norm(y) - 1.0) > 1e-10:
        raise ValueError("direction y must have unit Euclidean norm")
    if trials < 1:
        raise ValueError("trials must be >= 1")

    Y = y.reshape(n, n)
    quad = _quadratic_forms(spec, n, Y, trials, seed)
    samples = np.sqrt(kappa(spec, n)) * (quad - np.trace(Y))
    return MarginalSampleSet(samples=samples, spec=spec, n=n, y_descriptor=y_descriptor, y=y)


def raw_second_moment(
    spec: DistributionSpec, n: int, y: np.ndarray, trials: int, seed: int
) -> float:
    """E (a^T Y a)^2 of the uncentered, unnormalized quadratic form"""
    Y = np.asarray(y, dtype=float).reshape(n, n)
    quad = _quadratic_forms(spec, n, Y, trials, seed)
    return float(np.mean(quad * quad))


def moment_curve(set_: MarginalSampleSet, p_max: int) -> List[Tuple[int, float]]:
    """(p, (E|Z|^p)^(1/p)) for p = 1..p_max"""
    if len(set_) == 0:
        raise ValueError("empty sample set")
    z = np.abs(set_.samples)
    return [(p, float(np.mean(z ** p) ** (1.0 / p))) for p in range(1, p_max + 1)]


def psi_alpha_estimate(set_: MarginalSampleSet, alpha: int = 1, p_max: int = 8) -> float:
    """
    Moment-ratio estimate max_p (E|Z|^p)^(1/p) / p^(1/alpha).

    Equivalent to the psi_alpha norm up to a universal constant.
    """
    if alpha not in (1, 2):
        raise ValueError("alpha must be 1 or 2")
    if p_max < 2:
        raise ValueError("p_max must be >= 2")
    return max(value / p ** (1.0 / alpha) for p, value in moment_curve(set_, p_max))


def tail_curve(
    set_: MarginalSampleSet, t_grid: Sequence[float], min_exceedances: int = MIN_EXCEEDANCES
) -> List[Tuple[float, float, bool]]:
    """
    Empirical log P(|Z| > t) on t_grid.

    Each point is (t, log survival, reliable); points with fewer than
    `min_exceedances` exceedances are unreliable, and -inf when none.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be positive and increasing")
    z = np.sort(np.abs(set_.samples))
    total = z.size
    points = []
    for t in t_grid:
        exceed = total - int(np.searchsorted(z, t, side="right"))
        value = math.log(exceed / total) if exceed else -math.inf
        points.append((float(t), value, exceed >= min_exceedances))
    return points


def tail_shape(points: List[Tuple[float, float, bool]], t_min: float) -> Dict[str, float]:
    """
    Residuals of fitting log-survival beyond t_min by a + b t and by a + b t^2.

    A smaller linear residual indicates the sub-exponential regime.
    """
    ts = np.array([t for t, v, ok in points if ok and t >= t_min])
    vs = np.array([v for t, v, ok in points if ok and t >= t_min])
    if ts.size < 3:
        raise ValueError("need at least three reliable tail points beyond t_min")
    out = {}
    for name, feature in (("linear", ts), ("quadratic", ts ** 2)):
        design = np.column_stack([np.ones_like(feature), feature])
        _, rss, *_ = np.linalg.lstsq(design, vs, rcond=None)
        out[f"{name}_rss"] = float(rss[0]) if rss.size else 0.0
    return out


def hanson_wright_bound(
    t: float, B: float, frob: float, op_norm: float, c: float = 1.0
) -> float:
    """2 exp(-c min(t^2 / (B^4 |Y|_F^2), t / (B^2 |Y|)))"""
    exponent = min(t * t / (B ** 4 * frob ** 2), t / (B ** 2 * op_norm))
    return min(1.0, 2.0 * math.exp(-c * exponent))


def deviation_tail_bound(
    t: float, n: int, N: int, B: float, C: float = 1.0, c: float = 1.0
) -> float:
    """min(1, C exp(log N - (c / B^2) sqrt(t) n)) for the max column-norm deviation"""
    return min(1.0, C * math.exp(math.log(N) - (c / B ** 2) * math.sqrt(t) * n))


def side_condition(fourth: float, n: int, t: float) -> bool:
    """n >= 1 + (E a^4 - 1)(3/t - 1)"""
    return n >= 1 + (fourth - 1.0) * (3.0 / t - 1.0)


def norm_decomposition(spec: DistributionSpec, n: int, a: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Split ||A_i||^2 / n^2 - 1 = a + b - c for each column of `a`.

    With S = ||a_i||^2: a = kappa (S-n)^2 / n^2, b = 2 kappa (n-1)(S-n) / n^2,
    c = (E a^4 - 1) / (n - 2 + E a^4). Both a and c are non-negative.
    """
    fourth = fourth_moment(spec)
    k = kappa(spec, n)
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    S = np.einsum("ij,ij->j", a, a)
    n2 = float(n * n)
    return {
        "a": k * (S - n) ** 2 / n2,
        "b": 2.0 * k * (n - 1) * (S - n) / n2,
        "c": np.full(S.shape, (fourth - 1.0) / (n - 2 + fourth)),
        "direct": k * (S * S - 2 * S + n) / n2 - 1.0,
    }


def _concentration_rows(spec, n, N, trials, t_grid, seed) -> List[Dict[str, Any]]:
    maxdev = np.empty(trials)
    identity_error = 0.0
    min_a = math.inf
    min_c = math.inf
    for k in range(trials):
        entries = sample_block(spec, n, N, substream(seed, CONCENTRATION_STREAM, n, k))
        op = build(ColumnMatrix(n, N, entries, spec, seed), Mode.CENTERED)
        maxdev[k] = column_norm_deviation(op)
        if spec.is_entry_family:
            parts = norm_decomposition(spec, n, entries)
            direct = column_sq_norms(op) - 1.0
            identity_error = max(
                identity_error, float(np.max(np.abs(parts["a"] + parts["b"] - parts["c"] - direct)))
            )
            min_a = min(min_a, float(parts["a"].min()))
            min_c = min(min_c, float(parts["c"].min()))

    fourth = fourth_moment(spec) if spec.is_entry_family else 1.0
    rows = []
    for t in t_grid:
        rows.append(
            {
                "n": n,
                "t": float(t),
                "frequency": float(np.mean(maxdev >= t)),
                "trials": trials,
                "side_condition_ok": bool(side_condition(fourth, n, t)),
                "tail_bound": deviation_tail_bound(t, n, N, spec.psi2_bound),
                "identity_error": identity_error if spec.is_entry_family else float("nan"),
                "min_a_term": min_a if spec.is_entry_family else float("nan"),
                "min_c_term": min_c if spec.is_entry_family else float("nan"),
            }
        )
    return rows


def norm_concentration_experiment(
    spec: DistributionSpec,
    n_list: Sequence[int],
    N: int,
    trials: int,
    t_grid: Sequence[float],
    seed: int,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Frequency over `trials` matrices that max_i | ||A_i||^2/n^2 - 1 | >= t.

    One row per (n, t). Rows whose n violates the side condition at the
    smallest t are still computed and carry side_condition_ok = False.
    The identity_error column records the largest gap of the a + b - c
    split over every sampled column.
    """
    if trials < 1 or N < 1:
        raise ValueError("trials and N must be >= 1")
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] <= 0:
        raise ValueError("t_grid must contain positive values")

    if spec.is_entry_family:
        fourth = fourth_moment(spec)
        for n in n_list:
            if not side_condition(fourth, n, t_grid[0]):
                logger.warning(
                    "n=%d violates the side condition at t=%g; row is flagged", n, t_grid[0]
                )

    blocks = Parallel(n_jobs=jobs)(
        delayed(_concentration_rows)(spec, n, N, trials, t_grid, seed) for n in n_list
    )
    return pd.DataFrame([row for block in blocks for row in block])


def tail_report(
    set_: MarginalSampleSet, t_grid: Sequence[float], alpha: int = 1, p_max: int = 8
) -> TailReport:
    """psi_alpha estimate, moment curve and tail curve of one sample set"""
    return TailReport(
        psi_alpha_estimate=psi_alpha_estimate(set_, alpha, p_max),
        alpha=alpha,
        moment_curve=moment_curve(set_, p_max),
        tail_curve=tail_curve(set_, t_grid),
        samples=len(set_),
        p_max=p_max,
        extra={"family": set_.spec.name, "n": set_.n, "direction": set_.y_descriptor},
    )
