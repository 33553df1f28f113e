import numpy as np
import pytest
from scipy import integrate, stats

from copula_abc.core.adjacency import AdjacencySpec
from copula_abc.core.model import HyperParams, MarginalFamily, ParameterLayout
from copula_abc.core.priors import (
    PriorSampler,
    log_prior,
    ng_density,
    ng_log_density,
    tau2_log_prior,
    tau2_mh_step,
)
from copula_abc.core.sar import check_support
from copula_abc.errors import DomainError


@pytest.mark.parametrize("tau2", [0.5, 1.0, 3.0])
def test_lambda_one_is_laplace(tau2):
    x = np.append(np.linspace(-10.0, 10.0, 999), 0.0)
    laplace = stats.laplace.logpdf(x, scale=np.sqrt(tau2 / 2.0))
    np.testing.assert_allclose(ng_log_density(x, tau2, 1.0), laplace, rtol=0.0, atol=1e-12)
    np.testing.assert_allclose(ng_density(x, tau2, 1.0), np.exp(laplace), rtol=1e-12, atol=0.0)


@pytest.mark.parametrize("lam", [0.7, 2.0, 4.0])
def test_density_integrates_to_one(lam):
    total, _ = integrate.quad(lambda x: ng_density(x, 1.0, lam), -40, 40, points=[0.0], limit=200)
    assert total == pytest.approx(1.0, abs=1e-5)


def test_density_spike_for_small_lambda():
    assert ng_log_density(0.0, 1.0, 0.5) == np.inf


def test_invalid_hyperparameters():
    with pytest.raises(DomainError):
        ng_log_density(1.0, 0.0, 1.0)


def test_tau2_prior_support():
    assert tau2_log_prior(-1.0) == -np.inf
    assert np.isfinite(tau2_log_prior(0.5))


def test_tau2_step_stays_positive():
    rng = np.random.default_rng(0)
    tau2, accepted = 1.0, 0
    for _ in range(200):
        tau2, flag = tau2_mh_step(tau2, np.array([0.2, -0.4, 0.05]), rng)
        accepted += flag
        assert tau2 > 0
    assert 0 < accepted < 200


class TestLogPrior:
    @pytest.fixture
    def setup(self, layout, truth_theta, chain_adjacency):
        def support(rho):
            return check_support([chain_adjacency], rho, 3)

        return layout, truth_theta, support

    def test_finite_inside_support(self, setup, hyper):
        layout, theta, support = setup
        assert np.isfinite(log_prior(theta, layout, hyper, support=support))

    def test_minus_infinity_outside_support(self, setup, hyper):
        layout, theta, support = setup
        theta = theta.copy()
        theta[layout.slice_of("rho")] = 1 / np.sqrt(2.0)
        assert log_prior(theta, layout, hyper, support=support) == -np.inf

    def test_shrinkage_penalises_large_coefficients(self, setup, hyper):
        layout, theta, _ = setup
        wide = theta.copy()
        wide[layout.slice_of("beta")][1] = 4.0
        assert log_prior(wide, layout, hyper) < log_prior(theta, layout, hyper)


class TestPriorSampler:
    def test_dependence_draws_inside_support(self, layout, chain_adjacency):
        sampler = PriorSampler(layout, [chain_adjacency], n_margins=3)
        rng = np.random.default_rng(1)
        draws = [sampler.draw_dependence(rng) for _ in range(50)]
        assert all(check_support([chain_adjacency], rho, 3) for rho in draws)
        assert all(-1.0 <= rho[0] <= 1.0 for rho in draws)
        # часть равномерной коробки лежит вне Θ_D
        assert sampler.redraws > 0

    def test_positive_box(self, layout, chain_adjacency):
        sampler = PriorSampler(layout, [chain_adjacency], n_margins=3, rho_low=0.0, rho_high=1.0)
        rng = np.random.default_rng(2)
        assert all(sampler.draw_dependence(rng)[0] >= 0 for _ in range(20))

    def test_full_draw_layout(self, layout, chain_adjacency):
        theta = PriorSampler(layout, [chain_adjacency], n_margins=3).draw(np.random.default_rng(3))
        assert theta.shape == (layout.size,)
        params, _ = layout.unpack(theta)
        assert params.phi > 0

    def test_without_dependence(self):
        layout = ParameterLayout(family=MarginalFamily.PLAIN_NB, predictor_names=("intercept", "x1"))
        sampler = PriorSampler(layout, [], n_margins=3, hyper=HyperParams())
        assert sampler.draw(np.random.default_rng(4)).shape == (3,)

    def test_empty_box(self, layout, chain_adjacency):
        with pytest.raises(DomainError):
            PriorSampler(layout, [chain_adjacency], n_margins=3, rho_low=0.5, rho_high=0.5)
