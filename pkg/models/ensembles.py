from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple
import logging

import numpy as np
from scipy import integrate, optimize, stats

from .exceptions import DimensionError, DistributionError

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)

# Stream tags so that different consumers of the same seed never share draws
COLUMN_STREAM = 0
SUPPORT_STREAM = 1
PROBLEM_STREAM = 2
SOLVER_STREAM = 3
MARGINAL_STREAM = 4


class Family(str, Enum):
    """Column ensembles feeding the Khatri-Rao construction"""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    SPHERICAL = "spherical"


def _psi2_of_entry(family: Family) -> float:
    """
    Solve E exp(a^2/K^2) = 2 for K, the sub-Gaussian norm of one entry.

    Gaussian and Rademacher have closed forms; the bounded uniform one is
    found by root finding on the quadrature of the moment generating term.
    """
    if family in (Family.GAUSSIAN, Family.SPHERICAL):
        # E exp(X^2/K^2) = (1 - 2/K^2)^(-1/2)
        return float(np.sqrt(8.0 / 3.0))
    if family == Family.RADEMACHER:
        return float(1.0 / np.sqrt(np.log(2.0)))

    def excess(k):
        value, _ = integrate.quad(
            lambda x: np.exp(x * x / (k * k)) / (2 * SQRT3), -SQRT3, SQRT3
        )
        return value - 2.0

    return float(optimize.brentq(excess, 1.0, 10.0, xtol=1e-12))


@dataclass(frozen=True)
class DistributionSpec:
    """
    Describes the distribution of one column a_i of A.

    Attributes:
        family: Entry family, or SPHERICAL for columns uniform on the
            sphere of radius sqrt(n)
        psi2_bound: Nominal sub-Gaussian constant B of an entry (or of the
            marginals for the spherical ensemble). Diagnostic label only.
    """

    family: Family
    psi2_bound: float

    @classmethod
    def from_name(cls, name: str, psi2_bound: Optional[float] = None):
        """Build a spec from a CLI/config name such as "gaussian" """
        try:
            family = Family(str(name).strip().lower())
        except ValueError:
            choices = ", ".join(f.value for f in Family)
            raise DistributionError(
                f"unknown distribution family {name!r} (expected one of {choices})"
            ) from None
        if psi2_bound is None:
            psi2_bound = _NOMINAL_PSI2[family]
        if psi2_bound <= 0:
            raise DistributionError("psi2_bound must be positive")
        return cls(family=family, psi2_bound=float(psi2_bound))

    @property
    def name(self) -> str:
        return self.family.value

    @property
    def is_entry_family(self) -> bool:
        """True for ensembles with iid entries"""
        return self.family != Family.SPHERICAL


_NOMINAL_PSI2: Dict[Family, float] = {f: _psi2_of_entry(f) for f in Family}


@dataclass(frozen=True)
class ColumnMatrix:
    """
    The random n x N matrix A whose columns feed the Khatri-Rao product.

    Attributes:
        n: Column dimension
        N: Number of columns
        entries: n x N array, column i drawn from substream (seed, i)
        spec: Distribution of the columns
        seed: Seed the matrix was generated from
    """

    n: int
    N: int
    entries: np.ndarray
    spec: DistributionSpec
    seed: int

    def column(self, i: int) -> np.ndarray:
        return self.entries[:, i]

    def squared_norms(self) -> np.ndarray:
        """S_i = ||a_i||^2 for every column"""
        return np.einsum("ij,ij->j", self.entries, self.entries)

    def __repr__(self) -> str:
        return f"ColumnMatrix(family={self.spec.name}, n={self.n}, N={self.N}, seed={self.seed})"


def substream(seed: int, *key: int) -> np.random.Generator:
    """
    Independent generator for the counter (seed, *key).

    The stream only depends on the key, never on how many other streams
    were drawn before it, so parallel and serial generation agree.
    """
    if seed < 0:
        raise ValueError("seeds must be non-negative")
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    )


def sample_column(
    spec: DistributionSpec, n: int, stream: np.random.Generator
) -> np.ndarray:
    """
    Draw one isotropic column of length n.

    Args:
        spec: Column distribution
        n: Column dimension
        stream: Seeded generator, consumed in place

    Returns:
        Real vector of length n
    """
    if n < 1:
        raise DimensionError(f"column dimension must be >= 1, got {n}")

    family = spec.family
    if family == Family.GAUSSIAN:
        return stream.standard_normal(n)
    if family == Family.RADEMACHER:
        return 2.0 * stream.integers(0, 2, size=n).astype(float) - 1.0
    if family == Family.UNIFORM:
        return stream.uniform(-SQRT3, SQRT3, size=n)

    # Spherical: normalized Gaussian direction, radius sqrt(n)
    g = stream.standard_normal(n)
    return g * (np.sqrt(n) / np.linalg.norm(g))


def sample_block(
    spec: DistributionSpec, n: int, count: int, stream: np.random.Generator
) -> np.ndarray:
    """
    Draw `count` columns at once from a single stream (n x count).

    Used by Monte-Carlo loops that need many columns but no per-column
    reproducibility.
    """
    if n < 1 or count < 1:
        raise DimensionError(f"block dimensions must be >= 1, got n={n}, count={count}")

    family = spec.family
    if family == Family.GAUSSIAN:
        return stream.standard_normal((n, count))
    if family == Family.RADEMACHER:
        return 2.0 * stream.integers(0, 2, size=(n, count)).astype(float) - 1.0
    if family == Family.UNIFORM:
        return stream.uniform(-SQRT3, SQRT3, size=(n, count))

    g = stream.standard_normal((n, count))
    return g * (np.sqrt(n) / np.linalg.norm(g, axis=0))


def sample_matrix(spec: DistributionSpec, n: int, N: int, seed: int) -> ColumnMatrix:
    """
    Draw A with N independent columns.

    Column i only depends on (seed, i) so any column can be regenerated
    on its own.
    """
    if n < 1 or N < 1:
        raise DimensionError(f"matrix dimensions must be >= 1, got n={n}, N={N}")

    entries = np.empty((n, N))
    for i in range(N):
        entries[:, i] = sample_column(spec, n, substream(seed, COLUMN_STREAM, i))
    return ColumnMatrix(n=n, N=N, entries=entries, spec=spec, seed=int(seed))


def entry_moment(spec: DistributionSpec, p: int) -> float:
    """E a^p of one entry, by quadrature against the entry density"""
    if not spec.is_entry_family:
        raise DistributionError(
            "moments of entries undefined for spherical ensemble; use kappa directly"
        )
    if spec.family == Family.RADEMACHER:
        return 1.0 if p % 2 == 0 else 0.0
    if spec.family == Family.GAUSSIAN:
        value, _ = integrate.quad(
            lambda x: x**p * stats.norm.pdf(x), -np.inf, np.inf, epsabs=1e-12
        )
        return float(value)
    value, _ = integrate.quad(
        lambda x: x**p / (2 * SQRT3), -SQRT3, SQRT3, epsabs=1e-12
    )
    return float(value)


_CLOSED_FORM_FOURTH: Dict[Family, float] = {
    Family.RADEMACHER: 1.0,
    Family.GAUSSIAN: 3.0,
    Family.UNIFORM: 9.0 / 5.0,
}


def fourth_moment(spec: DistributionSpec) -> float:
    """
    E a^4 of one entry.

    Raises:
        DistributionError: for the spherical ensemble
    """
    if not spec.is_entry_family:
        raise DistributionError(
            "fourth moment of entries undefined for spherical ensemble; use kappa directly"
        )
    if spec.family in _CLOSED_FORM_FOURTH:
        return _CLOSED_FORM_FOURTH[spec.family]
    return entry_moment(spec, 4)


def empirical_moments(
    spec: DistributionSpec, samples: int, seed: int
) -> Tuple[float, float]:
    """Sample mean and second moment over `samples` iid entries"""
    if not spec.is_entry_family:
        raise DistributionError("entry moments are not defined for spherical columns")
    # Entries of one long column are iid draws of a single entry
    draws = sample_column(spec, samples, substream(seed, COLUMN_STREAM))
    return float(draws.mean()), float(np.mean(draws**2))
