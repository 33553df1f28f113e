import numpy as np
import pytest

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.sar import (
    DependenceParams,
    build_composite,
    build_correlation,
    check_support,
    submatrix,
)
from copula_abc.errors import ConfigError, DomainError, OutsideSupportError

PAIR = AdjacencySpec.from_pairs("t", [(0, 1)])


@pytest.mark.parametrize("rho", [-0.5, 0.1, 0.3, 0.9])
def test_two_margin_correlation(rho):
    model = build_correlation([PAIR], [rho], 2)
    assert model.R[0, 1] == pytest.approx(2 * rho / (1 + rho**2))
    expected_gamma2 = (1 - rho**2) ** 2 / (1 + rho**2)
    np.testing.assert_allclose(model.gamma2, [expected_gamma2, expected_gamma2])


def test_unit_diagonal_and_positive_definite(chain_adjacency):
    extra = AdjacencySpec.from_pairs("v", [(0, 2)])
    model = build_correlation([chain_adjacency, extra], [0.3, -0.2], 3)
    np.testing.assert_allclose(np.diag(model.R), 1.0)
    np.testing.assert_allclose(model.R, model.R.T)
    assert np.all(np.linalg.eigvalsh(model.R) > 0)
    np.testing.assert_allclose(model.cholesky @ model.cholesky.T, model.R, atol=1e-12)


def test_zero_rho_gives_identity(chain_adjacency):
    model = build_correlation([chain_adjacency], [0.0], 3)
    np.testing.assert_array_equal(model.R, np.eye(3))
    np.testing.assert_array_equal(model.gamma2, np.ones(3))


def test_empty_adjacency_list():
    model = build_correlation([], [], 4)
    np.testing.assert_array_equal(model.R, np.eye(4))


def test_singular_system_outside_support():
    with pytest.raises(OutsideSupportError):
        build_correlation([PAIR], [1.0], 2)
    assert not check_support([PAIR], [1.0], 2)
    assert check_support([PAIR], [0.4], 2)


def test_composite_matrix(chain_adjacency):
    composite = build_composite([chain_adjacency], [0.25])
    np.testing.assert_array_equal(
        composite, [[0, 0.25, 0], [0.25, 0, 0.25], [0, 0.25, 0]]
    )


def test_composite_length_mismatch(chain_adjacency):
    with pytest.raises(ConfigError):
        build_composite([chain_adjacency], [0.1, 0.2])


def test_dependence_params_names(chain_adjacency):
    params = DependenceParams(adjacencies=[chain_adjacency], rho=[0.2])
    assert params.names == ("t",)
    assert params.correlation(3).R.shape == (3, 3)
    with pytest.raises(ConfigError):
        DependenceParams(adjacencies=[chain_adjacency], rho=[0.2, 0.1])


def test_submatrix(chain_adjacency):
    model = build_correlation([chain_adjacency], [0.3], 3)
    sub = submatrix(model, [0, 2])
    assert sub.shape == (2, 2)
    assert sub[0, 1] == pytest.approx(model.R[0, 2])
    with pytest.raises(DomainError):
        submatrix(model, [])
    with pytest.raises(DomainError):
        model.submatrix([3])
