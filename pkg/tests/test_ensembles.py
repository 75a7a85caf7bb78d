import numpy as np
import pytest

from models.ensembles import (
    DistributionSpec,
    Family,
    empirical_moments,
    entry_moment,
    fourth_moment,
    sample_block,
    sample_column,
    sample_matrix,
    substream,
)
from models.exceptions import DimensionError, DistributionError


def test_from_name_accepts_cli_names():
    for name in ("gaussian", "rademacher", "uniform", "spherical"):
        spec = DistributionSpec.from_name(name)
        assert spec.name == name
        assert spec.psi2_bound > 0
    assert DistributionSpec.from_name(" Gaussian ").family == Family.GAUSSIAN


def test_from_name_rejects_unknown_family():
    with pytest.raises(DistributionError):
        DistributionSpec.from_name("cauchy")


def test_nominal_psi2_constants(gaussian, rademacher, uniform):
    assert gaussian.psi2_bound == pytest.approx(np.sqrt(8 / 3))
    assert rademacher.psi2_bound == pytest.approx(1 / np.sqrt(np.log(2)))
    # bounded entries are lighter-tailed than Gaussian ones
    assert 1.0 < uniform.psi2_bound < gaussian.psi2_bound


def test_rademacher_column_is_signs(rademacher):
    a = sample_column(rademacher, 3, substream(1, 0))
    assert set(a.tolist()) <= {-1.0, 1.0}


def test_spherical_column_has_norm_sqrt_n(spherical):
    a = sample_column(spherical, 5, substream(2, 0))
    assert a @ a == pytest.approx(5.0, rel=1e-12)


def test_sample_column_is_deterministic(gaussian):
    first = sample_column(gaussian, 2, substream(42, 0, 0))
    second = sample_column(gaussian, 2, substream(42, 0, 0))
    np.testing.assert_array_equal(first, second)


def test_sample_column_rejects_zero_dimension(gaussian):
    with pytest.raises(DimensionError):
        sample_column(gaussian, 0, substream(0))


def test_sample_matrix_rademacher(rademacher):
    A = sample_matrix(rademacher, 2, 4, seed=7)
    assert A.entries.shape == (2, 4)
    assert np.all(np.abs(A.entries) == 1.0)


def test_sample_matrix_reproducible(gaussian):
    first = sample_matrix(gaussian, 3, 6, seed=5)
    second = sample_matrix(gaussian, 3, 6, seed=5)
    np.testing.assert_array_equal(first.entries, second.entries)
    assert not np.array_equal(first.entries, sample_matrix(gaussian, 3, 6, seed=6).entries)


def test_columns_depend_only_on_seed_and_index(gaussian):
    small = sample_matrix(gaussian, 4, 3, seed=9)
    large = sample_matrix(gaussian, 4, 10, seed=9)
    np.testing.assert_array_equal(small.entries, large.entries[:, :3])


def test_spherical_matrix_column_norms(spherical):
    A = sample_matrix(spherical, 8, 16, seed=123)
    np.testing.assert_allclose(np.sqrt(A.squared_norms()), np.sqrt(8.0), rtol=1e-12)


def test_sample_matrix_rejects_zero_dimensions(gaussian):
    with pytest.raises(DimensionError):
        sample_matrix(gaussian, 3, 0, seed=0)


def test_fourth_moments(gaussian, rademacher, uniform):
    assert fourth_moment(rademacher) == 1.0
    assert fourth_moment(gaussian) == pytest.approx(3.0, abs=1e-10)
    assert fourth_moment(uniform) == pytest.approx(9 / 5, abs=1e-10)


def test_quadrature_agrees_with_closed_forms(gaussian, uniform):
    assert entry_moment(gaussian, 4) == pytest.approx(3.0, abs=1e-10)
    assert entry_moment(uniform, 4) == pytest.approx(9 / 5, abs=1e-10)
    assert entry_moment(uniform, 2) == pytest.approx(1.0, abs=1e-10)


def test_fourth_moment_spherical_raises(spherical):
    with pytest.raises(DistributionError, match="use kappa directly"):
        fourth_moment(spherical)


@pytest.mark.parametrize("name", ["gaussian", "rademacher", "uniform"])
def test_entry_families_are_standardized(name):
    spec = DistributionSpec.from_name(name)
    mean, second = empirical_moments(spec, 1_000_000, seed=17)
    assert abs(mean) < 4 / np.sqrt(1_000_000)
    assert second == pytest.approx(1.0, rel=0.01)


def test_spherical_columns_are_isotropic(spherical):
    n = 6
    A = sample_block(spherical, n, 100_000, substream(4, 0))
    cov = A @ A.T / A.shape[1]
    assert np.max(np.abs(cov - np.eye(n))) < 0.05
