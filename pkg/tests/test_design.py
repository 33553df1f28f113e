import numpy as np
import pytest

from copula_abc.core.design import (
    DEFAULT_TRUTH,
    PREDICTOR_NAMES,
    build_complete_design,
    build_flagship_design,
    representative_pairs,
)
from copula_abc.errors import ConfigError


@pytest.fixture(scope="module")
def flagship():
    return build_flagship_design(n_individuals=60, seed=11)


def test_flagship_dimensions(flagship):
    assert flagship.n_margins == 52 * 5
    assert flagship.n_covariates == 12
    assert flagship.predictor_names == PREDICTOR_NAMES
    DEFAULT_TRUTH.marginal.check_dimension(flagship)


def test_flagship_has_structural_gaps(flagship):
    # ни один индивид не наблюдается во всех маргиналях
    sizes = [flagship.observed_margins(i).size for i in range(flagship.n_individuals)]
    assert max(sizes) < flagship.n_margins
    assert min(sizes) > 0


def test_flagship_reproducible():
    a = build_flagship_design(n_individuals=20, seed=5, ages=(5, 9))
    b = build_flagship_design(n_individuals=20, seed=5, ages=(5, 9))
    np.testing.assert_array_equal(a.cells, b.cells)
    np.testing.assert_array_equal(a.predictors, b.predictors)


def test_flagship_rejects_unknown_age():
    with pytest.raises(ConfigError):
        build_flagship_design(n_individuals=5, ages=(5, 6))


def test_representative_pairs_present(flagship):
    pairs = representative_pairs(flagship)
    assert pairs
    assert all(a != b for a, b in pairs)


def test_complete_design():
    design = build_complete_design(4, 3)
    assert design.n_cells == 12
    assert design.predictor_names == ("intercept",)
    assert design.margins[2].location == "3"
    with pytest.raises(ConfigError):
        build_complete_design(4, 3, np.zeros((4, 2, 1)))


def test_default_truth_rho_vector():
    np.testing.assert_allclose(DEFAULT_TRUTH.rho_vector(["t", "ct", "h"]), [0.12, 0.012, 0.0])
