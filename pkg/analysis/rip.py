"""
Restricted isometry constants of a KR operator.

delta_s is the largest Gram deviation max(lambda_max - 1, 1 - lambda_min)
over supports of size s. It is computed exactly by enumeration on small
instances and bounded from below by random supports or greedy local
search on larger ones. The theory curves (bound and sparsity budget) are
plain formula evaluations with user supplied constants.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from itertools import combinations, islice
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.sparse.linalg import eigsh
from scipy.special import comb
from tqdm import tqdm

from models.ensembles import SUPPORT_STREAM, substream
from models.exceptions import BudgetExceededError, DimensionError
from models.kr_operator import KrOperator, column_sq_norms, gram

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_BUDGET = 2_000_000
DEFAULT_EIG_CROSSOVER = 64
_BATCH = 4096


class Method(str, Enum):
    EXACT = "exact"
    MONTE_CARLO = "monte-carlo"
    GREEDY = "greedy"


@dataclass(frozen=True)
class SupportSet:
    """Sorted, distinct column indices of an s-sparse vector"""

    indices: Tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) < 1:
            raise DimensionError("a support needs at least one index")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise DimensionError(f"support indices must be strictly increasing: {self.indices}")

    @classmethod
    def of(cls, indices: Iterable[int]) -> "SupportSet":
        values = [int(i) for i in indices]
        if len(set(values)) != len(values):
            raise DimensionError(f"duplicate indices in support {values}")
        return cls(tuple(sorted(values)))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass
class RipEstimate:
    """A delta_s value with the support that attains it"""

    s: int
    delta: float
    method: Method
    witness: SupportSet
    trials: int
    seed: Optional[int] = None

    def to_record(self) -> Dict[str, Any]:
        return {
            "s": self.s,
            "delta": self.delta,
            "method": self.method.value,
            "witness": list(self.witness.indices),
            "trials": self.trials,
            "seed": self.seed,
        }


@dataclass
class TheoryBoundParams:
    """
    Constants of the heavy-tailed column RIP bound.

    C and xi = psi*K + K' are universal-but-unknown, so they are fit
    parameters. theta_prime is the additive column-norm slack.
    """

    C: float = 1.0
    xi: float = 1.0
    K: float = 1.0
    Kprime: float = 1.0
    theta_prime: float = 0.0
    c_xi_delta: float = 1.0

    def __post_init__(self):
        if self.C <= 0 or self.xi <= 0:
            raise ValueError("C and xi must be positive")
        if self.K < 1 or self.Kprime < 1:
            raise ValueError("K and K' must be >= 1")
        if not 0 <= self.theta_prime < 1:
            raise ValueError("theta_prime must lie in [0, 1)")
        if not 0 < self.c_xi_delta <= 1:
            raise ValueError("c_xi_delta must lie in (0, 1]")

    @classmethod
    def from_components(cls, psi: float, K: float = 1.0, Kprime: float = 1.0, **kwargs):
        """Set xi = psi*K + K' from a psi_1 estimate"""
        return cls(xi=psi * K + Kprime, K=K, Kprime=Kprime, **kwargs)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def gram_submatrix(op: KrOperator, S: Sequence[int]) -> np.ndarray:
    """
    Gram of the scaled columns on support S.

    Raises:
        DimensionError: duplicate or out-of-range indices
    """
    indices = list(S.indices) if isinstance(S, SupportSet) else [int(i) for i in S]
    if len(set(indices)) != len(indices):
        raise DimensionError(f"duplicate indices in support {indices}")
    if any(i < 0 or i >= op.N for i in indices):
        raise DimensionError(f"support {indices} outside [0, {op.N})")
    return gram(op, indices)


def extreme_eigs(G: np.ndarray, crossover: int = DEFAULT_EIG_CROSSOVER) -> Tuple[float, float]:
    """
    Smallest and largest eigenvalue of a symmetric matrix.

    Dense eigh up to `crossover`, Lanczos for the two extremes above.
    Matrices below 3 x 3 are always solved densely.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {G.shape}")
    if not np.allclose(G, G.T, rtol=0.0, atol=1e-10):
        raise ValueError("matrix is not symmetric")

    s = G.shape[0]
    if s <= max(crossover, 2):
        w = linalg.eigh(G, eigvals_only=True)
        return float(w[0]), float(w[-1])
    # fixed start vector keeps reruns bit-identical
    v0 = np.linspace(1.0, 2.0, s)
    lo = eigsh(G, k=1, which="SA", v0=v0, return_eigenvectors=False, tol=1e-12)
    hi = eigsh(G, k=1, which="LA", v0=v0, return_eigenvectors=False, tol=1e-12)
    return float(lo[0]), float(hi[0])


def deviation(lambda_min: float, lambda_max: float) -> float:
    return max(lambda_max - 1.0, 1.0 - lambda_min)


def _batch_deviations(
    G: np.ndarray, supports: np.ndarray, crossover: int = DEFAULT_EIG_CROSSOVER
) -> np.ndarray:
    """
    Deviation of every support in a (B, s) index array.

    Supports up to `crossover` go through one batched dense eigvalsh,
    larger ones through extreme_eigs one at a time.
    """
    if supports.shape[1] > crossover:
        return np.array(
            [deviation(*extreme_eigs(G[np.ix_(row, row)], crossover)) for row in supports]
        )
    blocks = G[supports[:, :, None], supports[:, None, :]]
    w = np.linalg.eigvalsh(blocks)
    return np.maximum(w[:, -1] - 1.0, 1.0 - w[:, 0])


def _best_in_batch(
    G: np.ndarray, batch: List[Tuple[int, ...]], crossover: int
) -> Tuple[float, Tuple[int, ...]]:
    supports = np.asarray(batch, dtype=np.intp)
    devs = _batch_deviations(G, supports, crossover)
    k = int(np.argmax(devs))
    return float(devs[k]), batch[k]


def _chunks(iterator, size):
    while True:
        chunk = list(islice(iterator, size))
        if not chunk:
            return
        yield chunk


def _max_over(
    G: np.ndarray, supports, total: int, jobs: int, progress: bool, crossover: int
):
    """Max-reduce deviations over an iterable of supports, ties to the earliest"""
    batches = _chunks(iter(supports), _BATCH)
    if jobs == 1:
        results = (
            _best_in_batch(G, b, crossover)
            for b in tqdm(batches, total=math.ceil(total / _BATCH), disable=not progress)
        )
    else:
        results = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(_best_in_batch)(G, b, crossover) for b in batches
        )
    best, witness = -np.inf, None
    for value, support in results:
        if value > best:
            best, witness = value, support
    return best, witness


def delta_exact(
    op: KrOperator,
    s: int,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    jobs: int = 1,
    progress: bool = False,
    crossover: int = DEFAULT_EIG_CROSSOVER,
) -> RipEstimate:
    """
    delta_s by enumerating every support of size s.

    Raises:
        BudgetExceededError: more than `budget` supports; use delta_greedy
            or delta_monte_carlo instead
    """
    if not 1 <= s <= op.N:
        raise DimensionError(f"sparsity must lie in [1, {op.N}], got {s}")
    total = int(comb(op.N, s, exact=True))
    if total > budget:
        raise BudgetExceededError(
            f"C({op.N}, {s}) = {total} supports exceeds the enumeration budget {budget}; "
            "use delta_greedy or delta_monte_carlo"
        )

    G = gram(op)
    best, witness = _max_over(
        G, combinations(range(op.N), s), total, jobs, progress, crossover
    )
    logger.debug("exact delta_%d = %.6g over %d supports", s, best, total)
    return RipEstimate(
        s=s, delta=best, method=Method.EXACT, witness=SupportSet(witness), trials=total
    )


def random_support(N: int, s: int, seed: int, trial: int) -> Tuple[int, ...]:
    """Uniform support of size s for the counter (seed, trial)"""
    stream = substream(seed, SUPPORT_STREAM, trial)
    return tuple(sorted(int(i) for i in stream.choice(N, size=s, replace=False)))


def delta_monte_carlo(
    op: KrOperator,
    s: int,
    trials: int,
    seed: int,
    jobs: int = 1,
    crossover: int = DEFAULT_EIG_CROSSOVER,
) -> RipEstimate:
    """
    Lower bound on delta_s from random supports.

    When `trials` reaches C(N, s) every support is visited once, which
    makes the result exact.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 1 <= s <= op.N:
        raise DimensionError(f"sparsity must lie in [1, {op.N}], got {s}")

    G = gram(op)
    total = int(comb(op.N, s, exact=True))
    if trials >= total:
        supports = combinations(range(op.N), s)
        used = total
    else:
        supports = (random_support(op.N, s, seed, t) for t in range(trials))
        used = trials
    best, witness = _max_over(G, supports, used, jobs, False, crossover)
    return RipEstimate(
        s=s,
        delta=best,
        method=Method.MONTE_CARLO,
        witness=SupportSet(witness),
        trials=used,
        seed=seed,
    )


def _local_search(
    G: np.ndarray, start: Tuple[int, ...], crossover: int = DEFAULT_EIG_CROSSOVER
) -> Tuple[float, Tuple[int, ...]]:
    """Best-improvement single swap ascent from `start`"""
    N = G.shape[0]
    current = list(start)
    value = float(_batch_deviations(G, np.asarray([current], dtype=np.intp), crossover)[0])
    while True:
        inside = set(current)
        outside = [q for q in range(N) if q not in inside]
        if not outside:
            break
        candidates = []
        for p in range(len(current)):
            for q in outside:
                swapped = current[:p] + current[p + 1:] + [q]
                candidates.append(sorted(swapped))
        devs = _batch_deviations(G, np.asarray(candidates, dtype=np.intp), crossover)
        k = int(np.argmax(devs))
        if devs[k] <= value:
            break
        value, current = float(devs[k]), candidates[k]
    return value, tuple(current)


def delta_greedy(
    op: KrOperator,
    s: int,
    restarts: int,
    seed: int,
    jobs: int = 1,
    crossover: int = DEFAULT_EIG_CROSSOVER,
) -> RipEstimate:
    """
    Lower bound on delta_s by swap local search.

    Restart r starts from the same support as Monte-Carlo trial r with the
    same seed, so the result dominates delta_monte_carlo(op, s, restarts, seed)
    whenever that one samples at random.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if not 1 <= s <= op.N:
        raise DimensionError(f"sparsity must lie in [1, {op.N}], got {s}")

    G = gram(op)
    starts = [random_support(op.N, s, seed, r) for r in range(restarts)]
    if jobs == 1:
        results = [_local_search(G, start, crossover) for start in starts]
    else:
        results = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(_local_search)(G, start, crossover) for start in starts
        )

    best, witness = -np.inf, None
    for value, support in results:
        if value > best:
            best, witness = value, support
    return RipEstimate(
        s=s,
        delta=best,
        method=Method.GREEDY,
        witness=SupportSet(witness),
        trials=restarts,
        seed=seed,
    )


def column_norm_deviation(op: KrOperator) -> float:
    """max_i | ||scaled column i||^2 - 1 |"""
    return float(np.max(np.abs(column_sq_norms(op) - 1.0)))


def theory_bound(s: int, m: int, N: int, params: TheoryBoundParams) -> float:
    """
    C xi^2 sqrt(s/m) log(eN / (s sqrt(s/m))) + theta'.

    Upper bound on delta_s(A / sqrt(m)) for independent psi_1 columns,
    valid with high probability up to the unknown universal constants.
    """
    if not 1 <= s <= min(N, m):
        raise DimensionError(f"need 1 <= s <= min(N, m), got s={s}, m={m}, N={N}")
    ratio = math.sqrt(s / m)
    log_term = 1.0 + math.log(N / (s * ratio))
    return params.C * params.xi ** 2 * ratio * log_term + params.theta_prime


def sparsity_budget(n: int, N: int, c: float) -> int:
    """
    floor(c n^2 / log^2(eN / (c n^2))), at least 1.

    Raises:
        DimensionError: N < n^2 (the budget assumes at least as many
            columns as measurements)
    """
    m = n * n
    if N < m:
        raise DimensionError(
            f"sparsity budget assumes n^2 <= N, got n^2={m} > N={N}"
        )
    if not 0 < c <= 1:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    # 1 + log(.) keeps log(e) == 1 exact at N = c n^2
    log_term = 1.0 + math.log(N / (c * m))
    return max(1, int(math.floor(c * m / log_term ** 2)))


def c_xi_delta(delta: float, C: float, xi: float) -> float:
    """Sparsity constant min(1, (delta / (C xi^2))^2) that guarantees delta_s < delta"""
    return min(1.0, (delta / (C * xi ** 2)) ** 2)


def normalized_column_bound(c: float, C: float, xi: float) -> float:
    """3 C xi^2 sqrt(c): delta_s bound for exactly normalized columns inside the budget"""
    return 3.0 * C * xi ** 2 * math.sqrt(c)
