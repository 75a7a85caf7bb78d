"""
Sparse recovery through a KR operator.

Both solvers only touch the operator through apply/adjoint, so they run
unchanged on explicit and matrix-free operators. Neither algorithm is
prescribed by the RIP analysis; they are the library's choice and are
labeled as such in experiment reports.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional
import logging

import numpy as np

from models.ensembles import PROBLEM_STREAM, SOLVER_STREAM, substream
from models.exceptions import DimensionError
from models.kr_operator import KrOperator, adjoint, apply

logger = logging.getLogger(__name__)

IHT_LABEL = "IHT (library choice)"
FISTA_LABEL = "FISTA-LASSO (library choice)"


class AmplitudeModel(str, Enum):
    UNIT_SIGNS = "unit_signs"
    GAUSSIAN_AMPS = "gaussian_amps"


@dataclass
class RecoveryProblem:
    """y = apply(op, x_true) + noise for an s-sparse x_true"""

    op: KrOperator
    x_true: np.ndarray
    y: np.ndarray
    noise_sigma: float
    seed: int

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.x_true)

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.x_true))


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    support_recovered: bool
    objective: Optional[float] = None


def synth_problem(
    op: KrOperator,
    s: int,
    amplitude_model: AmplitudeModel = AmplitudeModel.UNIT_SIGNS,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> RecoveryProblem:
    """
    Random s-sparse problem, reproducible from `seed`.

    The support is uniform among all C(N, s) supports; amplitudes are
    random signs or standard normals.
    """
    if not 1 <= s <= op.N:
        raise DimensionError(f"sparsity must lie in [1, {op.N}], got {s}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")

    stream = substream(seed, PROBLEM_STREAM)
    support = stream.choice(op.N, size=s, replace=False)
    if AmplitudeModel(amplitude_model) == AmplitudeModel.UNIT_SIGNS:
        amplitudes = 2.0 * stream.integers(0, 2, size=s) - 1.0
    else:
        amplitudes = stream.standard_normal(s)

    x_true = np.zeros(op.N)
    x_true[support] = amplitudes
    y = apply(op, x_true)
    if noise_sigma > 0:
        y = y + noise_sigma * stream.standard_normal(op.m)
    return RecoveryProblem(op=op, x_true=x_true, y=y, noise_sigma=noise_sigma, seed=seed)


def operator_norm(op: KrOperator, iters: int = 100, seed: int = 0) -> float:
    """
    Power iteration estimate of the spectral norm of the scaled operator.

    The returned ||A x_k|| with unit x_k never decreases with `iters`.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = substream(seed, SOLVER_STREAM).standard_normal(op.N)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        y = apply(op, x)
        estimate = float(np.linalg.norm(y))
        x = adjoint(op, y)
        size = np.linalg.norm(x)
        if size == 0:
            break
        x /= size
    return estimate


def top_support(x: np.ndarray, s: int) -> np.ndarray:
    """Indices of the s largest magnitudes, ties to the lower index, sorted"""
    order = np.lexsort((np.arange(x.size), -np.abs(x)))
    return np.sort(order[:s])


def hard_threshold(x: np.ndarray, s: int) -> np.ndarray:
    keep = top_support(x, s)
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out


def soft_threshold(x: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def _same_support(x_hat: np.ndarray, problem: RecoveryProblem) -> bool:
    s = problem.s
    if s == 0:
        return not np.any(x_hat)
    return bool(np.array_equal(top_support(x_hat, s), problem.support))


def _result(problem, x, iterations, converged, objective=None) -> RecoveryResult:
    residual = float(np.linalg.norm(apply(problem.op, x) - problem.y))
    return RecoveryResult(
        x_hat=x,
        iterations=iterations,
        residual_norm=residual,
        converged=converged,
        support_recovered=_same_support(x, problem),
        objective=objective,
    )


def iht(
    problem: RecoveryProblem,
    s: int,
    max_iters: int = 3000,
    tol: float = 1e-10,
    step: Optional[float] = None,
    norm_iters: int = 100,
) -> RecoveryResult:
    """
    Iterative hard thresholding x <- H_s(x + mu A^T (y - A x)).

    Args:
        problem: Observation and operator
        s: Sparsity kept by the threshold
        max_iters: Iteration cap
        tol: Stop once ||x_new - x|| < tol
        step: Fixed step; defaults to 0.9 / ||A||^2
        norm_iters: Power iterations for the default step

    Returns:
        RecoveryResult, not converged on divergence or iteration cap
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    op, y = problem.op, problem.y
    if step is None:
        step = 0.9 / operator_norm(op, norm_iters, problem.seed) ** 2

    y_norm = np.linalg.norm(y)
    x = np.zeros(op.N)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        x_new = hard_threshold(x + step * adjoint(op, y - apply(op, x)), s)
        change = np.linalg.norm(x_new - x)
        x = x_new
        if np.linalg.norm(x) > 1e6 * max(y_norm, np.finfo(float).tiny):
            logger.debug("IHT diverged after %d iterations", iterations)
            break
        if change < tol:
            converged = True
            break
    return _result(problem, x, iterations, converged)


def _lasso_objective(op, y, x, lam) -> float:
    r = apply(op, x) - y
    return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())


def _fista(op, y, lam, x0, lipschitz, max_iters, tol):
    """Accelerated proximal gradient with function-value restart"""
    x = x0.copy()
    z = x0.copy()
    t = 1.0
    value = _lasso_objective(op, y, x, lam)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        grad = adjoint(op, apply(op, z) - y)
        x_new = soft_threshold(z - grad / lipschitz, lam / lipschitz)
        new_value = _lasso_objective(op, y, x_new, lam)
        if new_value > value and t > 1.0:
            # momentum overshot; the plain prox-gradient step from x descends
            t = 1.0
            z = x.copy()
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        change = np.linalg.norm(x_new - x)
        x, t, value = x_new, t_new, new_value
        if change <= tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
    return x, iterations, converged, value


def fista_lasso(
    problem: RecoveryProblem,
    lam: Optional[float] = None,
    max_iters: int = 5000,
    tol: float = 1e-10,
    continuation: bool = False,
    debias: bool = True,
    norm_iters: int = 100,
) -> RecoveryResult:
    """
    Minimize 0.5 ||A x - y||^2 + lam ||x||_1 with FISTA.

    lam defaults to 0.1 ||A^T y||_inf. With continuation the solver is
    warm started through 8 lam, 4 lam, 2 lam, lam. The returned estimate is
    debiased by least squares on the detected support; `objective` is the
    lasso objective of the final FISTA iterate.
    """
    op, y = problem.op, problem.y
    correlation = np.max(np.abs(adjoint(op, y)))
    if lam is None:
        lam = 0.1 * correlation
        if lam == 0:
            return _result(problem, np.zeros(op.N), 0, True, objective=0.0)
    if lam <= 0:
        raise ValueError("lambda must be positive")

    # power iteration approaches the norm from below
    lipschitz = 1.01 * operator_norm(op, norm_iters, problem.seed) ** 2
    if lipschitz == 0:
        zero = np.zeros(op.N)
        return _result(problem, zero, 0, True, objective=_lasso_objective(op, y, zero, lam))

    schedule = [8 * lam, 4 * lam, 2 * lam, lam] if continuation else [lam]
    x = np.zeros(op.N)
    total = 0
    for level in schedule:
        x, used, converged, value = _fista(op, y, level, x, lipschitz, max_iters, tol)
        total += used

    x_hat = x
    support = np.flatnonzero(x)
    if debias and support.size:
        columns = op.columns(support)
        coef, *_ = np.linalg.lstsq(columns, y, rcond=None)
        x_hat = np.zeros(op.N)
        x_hat[support] = coef
    return _result(problem, x_hat, total, converged, objective=value)


def success(result: RecoveryResult, problem: RecoveryProblem, rel_tol: float = 1e-3) -> bool:
    """Exact top-s support and relative error within rel_tol"""
    if not _same_support(result.x_hat, problem):
        return False
    error = np.linalg.norm(result.x_hat - problem.x_true)
    return bool(error <= rel_tol * np.linalg.norm(problem.x_true))
