import numpy as np
import pytest
from scipy import special

from copula_abc.core.gibbs import (
    DependenceInit,
    GibbsState,
    IndependenceFit,
    assemble_proposal,
    init_dependence,
    mle_initialization,
    run_independence_fit,
    sample_gig,
    sample_pg,
)
from copula_abc.core.model import MarginalFamily
from copula_abc.errors import ConfigError, InitializationError


def _pg_mean(b, z):
    return b * np.tanh(z / 2.0) / (2.0 * z)


@pytest.mark.parametrize("b, z", [(1.0, 1.5), (2.0, 0.7), (3.5, 4.0)])
def test_pg_mean(b, z):
    rng = np.random.default_rng(10)
    draws = sample_pg(np.full(20_000, b), np.full(20_000, z), rng)
    assert np.all(draws > 0)
    assert draws.mean() == pytest.approx(_pg_mean(b, z), rel=0.03)


def test_pg_scalar_and_validation():
    rng = np.random.default_rng(0)
    assert isinstance(sample_pg(1.0, 0.0, rng), float)
    with pytest.raises(ConfigError):
        sample_pg(np.array([0.0]), np.array([1.0]), rng)


def test_gig_mean():
    m, a, b = 0.5, 2.0, 3.0
    rng = np.random.default_rng(11)
    draws = sample_gig(m, np.full(20_000, a), np.full(20_000, b), rng)
    root = np.sqrt(a * b)
    expected = np.sqrt(b / a) * special.kv(m + 1, root) / special.kv(m, root)
    assert draws.mean() == pytest.approx(expected, rel=0.03)


def test_gig_zero_rate_is_floored():
    draws = sample_gig(0.5, np.array([1.0]), np.array([0.0]), np.random.default_rng(1))
    assert np.all(draws > 0)


class TestGibbsState:
    def test_initial(self):
        state = GibbsState.initial(3)
        assert state.sigma2_alpha.shape == (2,)
        assert state.phi == 1.0

    def test_export_restores_intercept(self):
        state = GibbsState.initial(2)
        state = GibbsState(
            alpha=np.array([0.1, 0.2]),
            beta=np.array([0.5, 0.3]),
            phi=2.0,
            sigma2_alpha=state.sigma2_alpha,
            sigma2_beta=state.sigma2_beta,
            tau2_alpha=1.0,
            tau2_beta=1.0,
            omega_alpha=state.omega_alpha,
            omega_beta=state.omega_beta,
        )
        exported = state.export(MarginalFamily.NB_HURDLE)
        np.testing.assert_allclose(exported, [0.1, 0.2, 0.5 + np.log(2.0), 0.3, np.log(2.0)])
        assert state.export(MarginalFamily.PLAIN_NB).shape == (3,)

    def test_invalid_dispersion(self):
        state = GibbsState.initial(2)
        with pytest.raises(ConfigError):
            GibbsState(
                alpha=state.alpha,
                beta=state.beta,
                phi=-1.0,
                sigma2_alpha=state.sigma2_alpha,
                sigma2_beta=state.sigma2_beta,
                tau2_alpha=1.0,
                tau2_beta=1.0,
                omega_alpha=state.omega_alpha,
                omega_beta=state.omega_beta,
            )


def test_independence_fit_rejects_poisson(simulator, truth_theta, design):
    dataset = simulator.simulate(truth_theta, 0)
    with pytest.raises(ConfigError):
        run_independence_fit(dataset, design, np.random.default_rng(0), 100, 10, family="poisson-hurdle")
    with pytest.raises(ConfigError):
        run_independence_fit(dataset, design, np.random.default_rng(0), 10, 10)


@pytest.mark.slow
def test_independence_fit_near_truth(design, nb_params, chain_adjacency, silent_logger):
    from copula_abc.core.copula import SimulationConfig, generate_dataset
    from copula_abc.core.sar import DependenceParams

    independent = DependenceParams(adjacencies=[chain_adjacency], rho=[0.0])
    dataset = generate_dataset(nb_params, independent, design, SimulationConfig(seed=1, design=design))
    fit = run_independence_fit(
        dataset, design, np.random.default_rng(5), iters=600, burnin=200, logger=silent_logger, log_every=100
    )
    assert fit.chain.shape == (400, 5)
    assert fit.names == ("alpha:intercept", "alpha:x1", "beta:intercept", "beta:x1", "log_phi")
    np.testing.assert_allclose(fit.sigma_tilde, fit.sigma_tilde.T)
    assert np.all(np.linalg.eigvalsh(fit.sigma_tilde) > 0)
    # 450 ячеек: грубая проверка смещения
    assert abs(fit.theta_tilde[0] - nb_params.alpha[0]) < 0.5
    assert abs(fit.theta_tilde[2] - nb_params.beta[0]) < 0.6
    assert 0.0 <= fit.shift_acceptance <= 1.0


def test_mle_initialization(design, simulator, truth_theta):
    dataset = simulator.simulate(truth_theta, 2)
    fit = mle_initialization(design, dataset)
    assert fit.theta_tilde.shape == (4,)
    assert fit.sigma_tilde.shape == (4, 4)
    assert fit.names[-1] == "beta:x1"


def test_init_dependence_selects_nearest(simulator, calculator, truth_theta, layout, silent_logger):
    dataset = simulator.simulate(truth_theta, 3)
    s_obs_D = calculator.dependence_summary(dataset)
    theta_M = truth_theta[: layout.marginal_size]
    init = init_dependence(theta_M, simulator, calculator, s_obs_D, seed=4, G=40, keep=0.1, logger=silent_logger)
    assert init.retained.shape == (4, 1)
    assert np.all((init.retained >= 0) & (init.retained <= 1))
    assert init.theta_tilde.shape == (1,)


def test_init_dependence_too_few(simulator, calculator, truth_theta, layout):
    dataset = simulator.simulate(truth_theta, 3)
    s_obs_D = calculator.dependence_summary(dataset)
    with pytest.raises(InitializationError):
        init_dependence(truth_theta[: layout.marginal_size], simulator, calculator, s_obs_D, seed=4, G=10, keep=0.1)


def test_assemble_proposal():
    marginal = IndependenceFit(
        theta_tilde=np.zeros(2), sigma_tilde=np.eye(2), chain=np.zeros((0, 2)), names=("a", "b")
    )
    dependence = DependenceInit(theta_tilde=np.array([0.3]), sigma_tilde=np.array([[0.01]]), retained=np.zeros((2, 1)))
    theta, covariance = assemble_proposal(marginal, dependence)
    np.testing.assert_allclose(theta, [0.0, 0.0, 0.3])
    assert covariance[2, 2] == 0.01 and covariance[0, 2] == 0.0
