import numpy as np
import pytest

from analysis.recovery import (
    AmplitudeModel,
    RecoveryProblem,
    RecoveryResult,
    fista_lasso,
    hard_threshold,
    iht,
    operator_norm,
    soft_threshold,
    success,
    synth_problem,
    top_support,
)
from models.ensembles import DistributionSpec, sample_matrix
from models.exceptions import DimensionError
from models.kr_operator import Mode, Representation, adjoint, apply, build


def _spherical_op(n, N, seed, mode=Mode.CENTERED, representation=Representation.MATRIX_FREE):
    spec = DistributionSpec.from_name("spherical")
    return build(sample_matrix(spec, n, N, seed), mode, representation)


def _zero_problem(op):
    return RecoveryProblem(op=op, x_true=np.zeros(op.N), y=np.zeros(op.m), noise_sigma=0.0, seed=0)


def test_synth_problem_noiseless_is_exact():
    op = _spherical_op(4, 16, seed=1)
    problem = synth_problem(op, 3, seed=2)
    np.testing.assert_array_equal(problem.y, apply(op, problem.x_true))
    assert problem.s == 3
    assert set(np.abs(problem.x_true[problem.support])) == {1.0}


def test_synth_problem_dense_and_gaussian_amplitudes():
    op = _spherical_op(3, 6, seed=1)
    problem = synth_problem(op, 6, AmplitudeModel.GAUSSIAN_AMPS, seed=5)
    assert problem.s == 6
    np.testing.assert_array_equal(problem.support, np.arange(6))


def test_synth_problem_is_reproducible():
    op = _spherical_op(4, 16, seed=1)
    first = synth_problem(op, 2, noise_sigma=0.1, seed=9)
    second = synth_problem(op, 2, noise_sigma=0.1, seed=9)
    np.testing.assert_array_equal(first.x_true, second.x_true)
    np.testing.assert_array_equal(first.y, second.y)
    assert not np.array_equal(first.y, apply(op, first.x_true))


def test_synth_problem_rejects_sparsity_above_N():
    op = _spherical_op(3, 5, seed=0)
    with pytest.raises(DimensionError):
        synth_problem(op, 6)


def test_operator_norm_single_column():
    op = _spherical_op(5, 1, seed=3)
    assert operator_norm(op, iters=5) == pytest.approx(np.linalg.norm(op.column(0)), rel=1e-12)


def test_operator_norm_matches_svd():
    spec = DistributionSpec.from_name("gaussian")
    op = build(sample_matrix(spec, 3, 6, seed=4), Mode.CENTERED, Representation.EXPLICIT)
    exact = np.linalg.norm(op.scale * op.matrix, 2)
    assert operator_norm(op, iters=200) == pytest.approx(exact, rel=0.01)


def test_operator_norm_non_decreasing_in_iters():
    op = _spherical_op(4, 20, seed=6, mode=Mode.UNCENTERED)
    estimates = [operator_norm(op, iters=k, seed=1) for k in (1, 2, 5, 20, 100)]
    assert all(b >= a - 1e-12 for a, b in zip(estimates, estimates[1:]))


def test_thresholds():
    x = np.array([0.5, -2.0, 2.0, 0.1])
    np.testing.assert_array_equal(top_support(x, 2), [1, 2])
    np.testing.assert_array_equal(top_support(np.ones(4), 2), [0, 1])
    np.testing.assert_array_equal(hard_threshold(x, 1), [0.0, -2.0, 0.0, 0.0])
    np.testing.assert_allclose(soft_threshold(x, 0.5), [0.0, -1.5, 1.5, 0.0])


def test_iht_zero_observation():
    op = _spherical_op(4, 16, seed=2)
    result = iht(_zero_problem(op), 2)
    assert result.iterations == 1
    assert result.converged
    assert not np.any(result.x_hat)


def test_iht_recovers_single_spike():
    op = _spherical_op(6, 16, seed=7)
    problem = synth_problem(op, 1, seed=3)
    result = iht(problem, 1)
    assert result.converged
    assert result.support_recovered
    error = np.linalg.norm(result.x_hat - problem.x_true) / np.linalg.norm(problem.x_true)
    assert error <= 1e-6
    assert success(result, problem)
    assert result.residual_norm <= 1e-6 * np.linalg.norm(problem.y)


def test_iht_keeps_at_most_s_nonzeros():
    op = _spherical_op(5, 30, seed=8)
    problem = synth_problem(op, 4, AmplitudeModel.GAUSSIAN_AMPS, seed=1)
    result = iht(problem, 4, max_iters=50)
    assert np.count_nonzero(result.x_hat) <= 4


def test_iht_fails_far_beyond_budget():
    failures = 0
    for trial in range(20):
        op = _spherical_op(3, 40, seed=100 + trial)
        problem = synth_problem(op, 20, seed=trial)
        result = iht(problem, 20, max_iters=300)
        failures += not result.support_recovered
    assert failures > 10


def test_unit_step_iht_is_unstable_on_uncentered_spike():
    # lambda_max of an uncentered restricted Gram is at least s/n, so a unit
    # step cannot settle on the true support once s > 2n
    n, s = 6, 14
    for trial in range(5):
        op = _spherical_op(n, 40, seed=300 + trial, mode=Mode.UNCENTERED)
        problem = synth_problem(op, s, AmplitudeModel.GAUSSIAN_AMPS, seed=trial)
        result = iht(problem, s, step=1.0, max_iters=500)
        assert not success(result, problem)


def test_iht_reports_divergence():
    op = _spherical_op(4, 16, seed=2)
    problem = synth_problem(op, 2, seed=1)
    result = iht(problem, 2, step=50.0, max_iters=500)
    assert not result.converged


def test_fista_large_lambda_gives_zero():
    op = _spherical_op(4, 16, seed=2)
    problem = synth_problem(op, 2, seed=4)
    lam = float(np.max(np.abs(adjoint(op, problem.y))))
    result = fista_lasso(problem, lam=lam)
    assert not np.any(result.x_hat)


def test_fista_zero_observation():
    op = _spherical_op(4, 16, seed=2)
    result = fista_lasso(_zero_problem(op))
    assert not np.any(result.x_hat)


def test_fista_rejects_non_positive_lambda():
    op = _spherical_op(4, 16, seed=2)
    with pytest.raises(ValueError):
        fista_lasso(synth_problem(op, 1, seed=0), lam=0.0)


@pytest.mark.parametrize("continuation", [False, True])
def test_fista_agrees_with_iht(continuation):
    op = _spherical_op(8, 32, seed=12)
    problem = synth_problem(op, 2, seed=5)
    by_iht = iht(problem, 2)
    by_fista = fista_lasso(problem, continuation=continuation)
    assert success(by_iht, problem)
    np.testing.assert_array_equal(top_support(by_fista.x_hat, 2), top_support(by_iht.x_hat, 2))
    assert by_fista.objective <= 0.5 * float(problem.y @ problem.y)


def test_solvers_run_on_explicit_operators():
    free = _spherical_op(6, 20, seed=3)
    explicit = _spherical_op(6, 20, seed=3, representation=Representation.EXPLICIT)
    a = iht(synth_problem(free, 2, seed=1), 2)
    b = iht(synth_problem(explicit, 2, seed=1), 2)
    np.testing.assert_allclose(a.x_hat, b.x_hat, atol=1e-8)


def test_success_criterion():
    op = _spherical_op(4, 16, seed=2)
    problem = synth_problem(op, 2, seed=4)

    def result_for(x):
        return RecoveryResult(
            x_hat=x, iterations=1, residual_norm=0.0, converged=True, support_recovered=False
        )

    assert success(result_for(problem.x_true.copy()), problem)
    assert not success(result_for(np.zeros(op.N)), problem)
    # same amplitudes, every index moved by one
    assert not success(result_for(np.roll(problem.x_true, 1)), problem)
