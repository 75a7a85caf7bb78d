import pytest

from models import DistributionSpec, Mode, Representation, build, sample_matrix


@pytest.fixture
def spherical():
    return DistributionSpec.from_name("spherical")


@pytest.fixture
def rademacher():
    return DistributionSpec.from_name("rademacher")


@pytest.fixture
def gaussian():
    return DistributionSpec.from_name("gaussian")


@pytest.fixture
def uniform():
    return DistributionSpec.from_name("uniform")


@pytest.fixture
def spherical_op(spherical):
    """Centered 16 x 12 operator from a spherical source"""
    return build(sample_matrix(spherical, 4, 12, seed=3), Mode.CENTERED)


@pytest.fixture
def gaussian_pair(gaussian):
    """Matrix-free and explicit centered operators sharing one Gaussian source"""
    source = sample_matrix(gaussian, 5, 17, seed=11)
    return (
        build(source, Mode.CENTERED, Representation.MATRIX_FREE),
        build(source, Mode.CENTERED, Representation.EXPLICIT),
    )
