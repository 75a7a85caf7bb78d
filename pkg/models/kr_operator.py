from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Optional, Sequence
import logging

import numpy as np
import pandas as pd
from scipy.sparse.linalg import LinearOperator

from .ensembles import (
    ColumnMatrix,
    DistributionSpec,
    Family,
    fourth_moment,
    sample_block,
    substream,
)
from .exceptions import BudgetExceededError, DimensionError, DistributionError, KrRipError

logger = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2**28


class Mode(str, Enum):
    CENTERED = "centered"
    UNCENTERED = "uncentered"


class Representation(str, Enum):
    EXPLICIT = "explicit"
    MATRIX_FREE = "matrix_free"


def kappa(spec: DistributionSpec, n: int) -> float:
    """
    Normalization kappa(n) = n^2 / E||vec(a a^T - I)||^2.

    Rademacher and spherical columns have S = ||a||^2 = n, which gives
    n/(n-1). Other entry families use n / (n - 2 + E a^4).

    Raises:
        DistributionError: if n < 2
    """
    if n < 2:
        raise DistributionError(f"kappa undefined for n={n} (need n >= 2)")
    if spec.family in (Family.RADEMACHER, Family.SPHERICAL):
        return n / (n - 1)
    return n * n / (n * (n - 2 + fourth_moment(spec)))


def kappa_monte_carlo(spec: DistributionSpec, n: int, samples: int, seed: int) -> float:
    """Empirical kappa(n): n^2 over the sample mean of S^2 - 2S + n"""
    a = sample_block(spec, n, samples, substream(seed, 0))
    S = np.einsum("ij,ij->j", a, a)
    return float(n * n / np.mean(S * S - 2 * S + n))


def center_column(a: np.ndarray, kappa: float) -> np.ndarray:
    """
    sqrt(kappa) * vec(a a^T - I_n), vectorized row-major.

    The square root keeps E||column||^2 = n^2, matching the squared-norm
    identity kappa * (S^2 - 2S + n).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    a = np.asarray(a, dtype=float)
    outer = np.outer(a, a)
    outer[np.diag_indices_from(outer)] -= 1.0
    return np.sqrt(kappa) * outer.ravel()


@dataclass(frozen=True)
class KrOperator:
    """
    The n^2 x N self Khatri-Rao measurement operator, scaled by 1/n.

    Centered columns are sqrt(kappa) vec(a_i a_i^T - I), uncentered
    columns vec(a_i a_i^T). The explicit representation stores the
    unscaled n^2 x N matrix; the matrix-free one only keeps the source.

    Instances are immutable, so apply/adjoint may be shared across threads.
    """

    source: ColumnMatrix
    mode: Mode
    kappa: float
    scale: float
    representation: Representation
    matrix: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def N(self) -> int:
        return self.source.N

    @property
    def m(self) -> int:
        """Number of measurements n^2"""
        return self.source.n ** 2

    @property
    def centered(self) -> bool:
        return self.mode == Mode.CENTERED

    @property
    def column_factor(self) -> float:
        """Overall factor in front of vec(.) for every column, scale included"""
        root = np.sqrt(self.kappa) if self.centered else 1.0
        return self.scale * root

    def rescaled(self, t: float) -> "KrOperator":
        """Same operator with every column multiplied by t"""
        if t <= 0:
            raise ValueError("rescale factor must be positive")
        return replace(self, scale=self.scale * t)

    def column(self, i: int) -> np.ndarray:
        """Scaled column i"""
        if self.matrix is not None:
            return self.scale * self.matrix[:, i]
        a = self.source.column(i)
        if self.centered:
            return self.scale * center_column(a, self.kappa)
        return self.scale * np.outer(a, a).ravel()

    def columns(self, indices: Sequence[int]) -> np.ndarray:
        """Scaled columns on `indices` as an n^2 x len(indices) array"""
        return np.column_stack([self.column(i) for i in indices])

    def __repr__(self) -> str:
        return (
            f"KrOperator(family={self.source.spec.name}, mode={self.mode.value}, "
            f"n={self.n}, N={self.N}, kappa={self.kappa:.6g}, repr={self.representation.value})"
        )


def _materialize(source: ColumnMatrix, mode: Mode, kappa_value: float) -> np.ndarray:
    A = source.entries
    n, N = A.shape
    # (n, n, N) in C order flattens to vec(a a^T)_{i*n+j} = a_i a_j
    outer = (A[:, None, :] * A[None, :, :]).reshape(n * n, N)
    if mode == Mode.UNCENTERED:
        return outer
    outer -= np.eye(n).ravel()[:, None]
    return np.sqrt(kappa_value) * outer


def build(
    source: ColumnMatrix,
    mode: Mode = Mode.CENTERED,
    representation: Representation = Representation.MATRIX_FREE,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> KrOperator:
    """
    Build the KR operator from a column matrix.

    Args:
        source: The matrix A
        mode: CENTERED or UNCENTERED
        representation: EXPLICIT materializes the n^2 x N array
        memory_budget: Largest number of entries an explicit matrix may hold

    Returns:
        KrOperator with scale 1/n

    Raises:
        BudgetExceededError: explicit matrix larger than the budget
    """
    mode = Mode(mode)
    representation = Representation(representation)
    kappa_value = kappa(source.spec, source.n) if mode == Mode.CENTERED else 1.0

    matrix = None
    if representation == Representation.EXPLICIT:
        entries = source.n ** 2 * source.N
        if entries > memory_budget:
            raise BudgetExceededError(
                f"explicit KR matrix needs {entries} entries, budget is {memory_budget}; "
                "use the matrix-free representation"
            )
        matrix = _materialize(source, mode, kappa_value)
        matrix.setflags(write=False)

    logger.debug(
        "built %s KR operator n=%d N=%d kappa=%.6g (%s)",
        mode.value, source.n, source.N, kappa_value, representation.value,
    )
    return KrOperator(
        source=source,
        mode=mode,
        kappa=kappa_value,
        scale=1.0 / source.n,
        representation=representation,
        matrix=matrix,
    )


def apply(op: KrOperator, x: np.ndarray) -> np.ndarray:
    """
    Measurement map y = (scale) sum_i x_i column_i.

    The matrix-free path forms sum_i x_i a_i a_i^T - (sum_i x_i) I as one
    n x n product.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (op.N,):
        raise DimensionError(f"expected a vector of length {op.N}, got shape {x.shape}")

    if op.matrix is not None:
        return op.scale * (op.matrix @ x)

    A = op.source.entries
    M = (A * x) @ A.T
    if op.centered:
        M[np.diag_indices_from(M)] -= x.sum()
    return op.column_factor * M.ravel()


def adjoint(op: KrOperator, y: np.ndarray) -> np.ndarray:
    """
    Adjoint map; entry i is (scale) sqrt(kappa) (a_i^T Y a_i - tr Y)
    for the centered operator, with Y the n x n reshape of y.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (op.m,):
        raise DimensionError(f"expected a vector of length {op.m}, got shape {y.shape}")

    if op.matrix is not None:
        return op.scale * (op.matrix.T @ y)

    A = op.source.entries
    Y = y.reshape(op.n, op.n)
    quad = np.einsum("ij,ij->j", A, Y @ A)
    if op.centered:
        quad -= np.trace(Y)
    return op.column_factor * quad


def column_sq_norms(op: KrOperator) -> np.ndarray:
    """||scaled column i||^2 for all i, from S_i = ||a_i||^2 alone"""
    S = op.source.squared_norms()
    raw = S * S - 2 * S + op.n if op.centered else S * S
    return op.column_factor ** 2 * raw


def gram(op: KrOperator, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Gram matrix of scaled columns on `indices` (all columns by default).

    Uses <vec(a a^T - I), vec(b b^T - I)> = (a.b)^2 - |a|^2 - |b|^2 + n, so
    no n^2-length column is ever formed.
    """
    A = op.source.entries if indices is None else op.source.entries[:, list(indices)]
    inner = A.T @ A
    G = inner * inner
    if op.centered:
        S = np.diag(inner)
        G = G - S[:, None] - S[None, :] + op.n
    G = op.column_factor ** 2 * G
    # exact symmetry regardless of rounding in A^T A
    return 0.5 * (G + G.T)


def as_linear_operator(op: KrOperator) -> LinearOperator:
    """scipy view of the operator (matvec = apply, rmatvec = adjoint)"""
    return LinearOperator(
        shape=(op.m, op.N),
        matvec=lambda x: apply(op, np.ravel(x)),
        rmatvec=lambda y: adjoint(op, np.ravel(y)),
        dtype=float,
    )


def header(op: KrOperator) -> Dict[str, Any]:
    """Operator metadata as a JSON-serializable dict"""
    return {
        "n": op.n,
        "N": op.N,
        "mode": op.mode.value,
        "kappa": op.kappa,
        "scale": op.scale,
        "seed": op.source.seed,
        "family": op.source.spec.name,
        "representation": op.representation.value,
    }


def export_csv(op: KrOperator, path: str) -> None:
    """Write the scaled explicit matrix as CSV (one row per measurement)"""
    if op.matrix is None:
        raise KrRipError("only explicit operators can be exported; rebuild with EXPLICIT")
    frame = pd.DataFrame(op.scale * op.matrix, columns=[f"col_{i}" for i in range(op.N)])
    frame.to_csv(path, index=False, float_format="%.17g")
