import numpy as np
import pytest
from scipy import special, stats

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.design import build_complete_design
from copula_abc.core.model import CountDataset, MarginalFamily
from copula_abc.core.sar import build_correlation
from copula_abc.core.copula import simulate_latents
from copula_abc.core.summaries import (
    KernelSpec,
    SummaryVector,
    distance,
    estimate_latents,
    estimate_scaling,
    kernel_value,
    logistic_irls,
    nb_regression,
    poisson_regression,
    sar_summary,
)
from copula_abc.errors import DegenerateSummaryError, DomainError, SummaryFailure


@pytest.fixture
def regressors():
    rng = np.random.default_rng(21)
    return np.column_stack([np.ones(5000), rng.normal(size=5000)]), rng


def test_logistic_recovers_coefficients(regressors):
    X, rng = regressors
    truth = np.array([0.3, -0.8])
    z = rng.random(X.shape[0]) < special.expit(X @ truth)
    np.testing.assert_allclose(logistic_irls(X, z), truth, atol=0.15)


def test_logistic_single_class():
    X = np.ones((10, 1))
    with pytest.raises(SummaryFailure):
        logistic_irls(X, np.ones(10))


def test_logistic_separable_data_fails():
    X = np.column_stack([np.ones(20), np.arange(20.0)])
    with pytest.raises(SummaryFailure):
        logistic_irls(X, np.arange(20) >= 10)


def test_nb_regression_recovers_coefficients(regressors):
    X, rng = regressors
    beta, phi = np.array([0.5, 0.3]), 2.0
    mu = np.exp(X @ beta)
    y = rng.negative_binomial(phi, phi / (phi + mu))
    coef, log_phi = nb_regression(X, y)
    np.testing.assert_allclose(coef, beta, atol=0.1)
    assert log_phi == pytest.approx(np.log(phi), abs=0.2)


def test_nb_regression_all_zero():
    with pytest.raises(SummaryFailure):
        nb_regression(np.ones((5, 1)), np.zeros(5))


def test_poisson_regression(regressors):
    X, rng = regressors
    beta = np.array([0.2, 0.4])
    y = rng.poisson(np.exp(X @ beta))
    np.testing.assert_allclose(poisson_regression(X, y), beta, atol=0.08)


def test_estimate_latents_mid_ranks():
    design = build_complete_design(4, 1)
    dataset = CountDataset(design=design, values=np.array([0, 0, 1, 2]))
    expected = stats.norm.ppf(np.array([1.0, 1.0, 2.5, 3.5]) / 4)
    np.testing.assert_allclose(estimate_latents(dataset, design)[:, 0], expected)


def test_sar_summary_tracks_dependence():
    pair = AdjacencySpec.from_pairs("t", [(0, 1)])
    design = build_complete_design(3000, 2)
    independent = simulate_latents(build_correlation([pair], [0.0], 2), design, seed=2).reshape(-1, 2)
    dependent = simulate_latents(build_correlation([pair], [0.4], 2), design, seed=2).reshape(-1, 2)
    assert abs(sar_summary(independent, [pair], design)[0]) < 0.1
    assert sar_summary(dependent, [pair], design)[0] > 0.3


def test_sar_summary_without_adjacency(design):
    assert sar_summary(np.zeros((design.n_individuals, design.n_margins)), [], design).shape == (0,)


class TestKernel:
    def test_distance_weighted(self):
        kernel = KernelSpec(bandwidth=1.0, scaling=np.array([1.0, 4.0]))
        assert distance(np.array([1.0, 1.0]), np.array([0.0, 0.5]), kernel) == pytest.approx(2.0)

    def test_distance_of_summary_vectors(self):
        kernel = KernelSpec(bandwidth=1.0, scaling=np.ones(3))
        s = SummaryVector(s_M=[1.0, 2.0], s_D=[0.5])
        assert distance(s, s, kernel) == 0.0

    def test_distance_dimension_mismatch(self):
        with pytest.raises(DomainError):
            distance(np.zeros(2), np.zeros(3), KernelSpec(bandwidth=1.0, scaling=np.ones(2)))

    def test_kernel_value(self):
        assert kernel_value(0.0, 10.0) == 1.0
        assert kernel_value(10.0, 10.0) == pytest.approx(np.exp(-1.0))
        with pytest.raises(DomainError):
            kernel_value(1.0, 0.0)

    @pytest.mark.parametrize("bandwidth, scaling", [(0.0, [1.0]), (1.0, [0.0]), (np.nan, [1.0])])
    def test_invalid_spec(self, bandwidth, scaling):
        with pytest.raises(DomainError):
            KernelSpec(bandwidth=bandwidth, scaling=np.array(scaling))

    def test_with_bandwidth(self):
        kernel = KernelSpec(bandwidth=1.0, scaling=np.ones(2)).with_bandwidth(30.0)
        assert kernel.bandwidth == 30.0


def test_summary_vector_rejects_nan():
    with pytest.raises(SummaryFailure):
        SummaryVector(s_M=[np.nan], s_D=[])


class TestSummaryCalculator:
    def test_names_follow_parameters(self, calculator, layout):
        assert calculator.names() == layout.names()
        assert calculator.size == layout.size

    def test_compute(self, calculator, simulator, truth_theta):
        summary = calculator.compute(simulator.simulate(truth_theta, 1))
        assert len(summary) == calculator.size
        assert np.all(np.isfinite(summary.vector))

    def test_plain_nb_has_no_presence_block(self, design, chain_adjacency):
        from copula_abc.core.summaries import SummaryCalculator

        calculator = SummaryCalculator(design, [chain_adjacency], MarginalFamily.PLAIN_NB)
        assert not any(name.startswith("alpha") for name in calculator.names())


@pytest.mark.slow
def test_scaling_is_inverse_variance(simulator, calculator, truth_theta, silent_logger):
    scaling = estimate_scaling(truth_theta, simulator, calculator, seed=4, G=40, threads=2, logger=silent_logger)
    assert scaling.shape == (calculator.size,)
    assert np.all(scaling > 0)


class _FrozenSimulator:
    """Всегда возвращает один и тот же набор данных."""

    def __init__(self, dataset, layout):
        self.dataset = dataset
        self.design = dataset.design
        self.layout = layout

    def simulate(self, theta, seed):
        return self.dataset

    def clone(self):
        return self


def test_scaling_degenerate(simulator, calculator, truth_theta, layout):
    frozen = _FrozenSimulator(simulator.simulate(truth_theta, 0), layout)
    with pytest.raises(DegenerateSummaryError):
        estimate_scaling(truth_theta, frozen, calculator, seed=0, G=5)
