import numpy as np
import pytest

from copula_abc.core.samplers import (
    ABCMCMCSampler,
    AdaptationState,
    ChainArchive,
    ImportanceSampler,
    RejectionSampler,
    WeightedSample,
)
from copula_abc.core.samplers.mcmc import abc_mcmc, adapt_proposal
from copula_abc.core.summaries import KernelSpec
from copula_abc.errors import ConfigError, DomainError


@pytest.fixture
def kernel(calculator):
    return KernelSpec(bandwidth=10.0, scaling=np.ones(calculator.size))


@pytest.fixture
def s_obs(calculator, simulator, truth_theta):
    return calculator.compute(simulator.simulate(truth_theta, 100))


@pytest.fixture
def init_cov(layout):
    return 0.01 * np.eye(layout.size)


class TestAdaptation:
    def test_fixed_rate_before_switch(self):
        state = AdaptationState(eta=1.0, mean=np.zeros(2), cov=np.eye(2))
        new = adapt_proposal(state, np.array([1.0, 0.0]), accept_prob_g=0.6, g=1, target=0.1, switch=500)
        assert new.eta == pytest.approx(np.exp(0.5 / 500))
        np.testing.assert_allclose(new.mean, [1.0 / 500, 0.0])
        assert new.step == 1

    def test_decaying_rate_after_switch(self):
        state = AdaptationState(eta=2.0, mean=np.zeros(1), cov=np.eye(1))
        new = adapt_proposal(state, np.array([0.0]), accept_prob_g=0.0, g=1000, target=0.1, switch=500)
        assert new.eta == pytest.approx(2.0 * np.exp(-0.1 / 1000))
        assert new.cov[0, 0] == pytest.approx(1.0 - 1.0 / 1000)
        np.testing.assert_allclose(new.proposal_cov, new.eta * new.cov)

    def test_invalid_iteration(self):
        state = AdaptationState(eta=1.0, mean=np.zeros(1), cov=np.eye(1))
        with pytest.raises(ConfigError):
            adapt_proposal(state, np.zeros(1), 0.1, g=0)


class TestWeightedSample:
    def test_normalises_weights(self):
        sample = WeightedSample(
            theta=np.zeros((3, 1)),
            weights=np.array([5.0, 3.0, 2.0]),
            summaries=np.zeros((3, 1)),
            distances=np.zeros(3),
            names=("x",),
            sampler="importance",
        )
        np.testing.assert_allclose(sample.weights, [0.5, 0.3, 0.2])
        assert sample.effective_sample_size == pytest.approx(1 / 0.38)
        assert sample.mass_carriers(0.5) == 1
        assert sample.mass_carriers(0.9) == 3

    def test_zero_weights_rejected(self):
        with pytest.raises(DomainError):
            WeightedSample(
                theta=np.zeros((2, 1)),
                weights=np.zeros(2),
                summaries=np.zeros((2, 1)),
                distances=np.zeros(2),
                names=("x",),
                sampler="importance",
            )


def _archive(n=20, size=2):
    rng = np.random.default_rng(0)
    return ChainArchive(
        theta=rng.normal(size=(n, size)),
        summaries=rng.normal(size=(n, size)),
        distances=np.abs(rng.normal(size=n)),
        accepted=np.arange(n) % 4 == 0,
        tau2_alpha=np.ones(n),
        tau2_beta=np.ones(n),
        adaptation=AdaptationState(eta=1.0, mean=np.zeros(size), cov=np.eye(size)),
        seed=1,
        kernel=KernelSpec(bandwidth=1.0, scaling=np.ones(size)),
        names=("a", "b"),
        initial_theta=np.zeros(size),
    )


class TestChainArchive:
    def test_acceptance(self):
        assert _archive().acceptance_per_100() == pytest.approx(25.0)

    def test_post_burnin(self):
        archive = _archive()
        tail = archive.post_burnin(burnin=10, thin=2)
        assert tail.iterations == 5
        np.testing.assert_array_equal(tail.theta, archive.theta[10::2])
        with pytest.raises(DomainError):
            archive.post_burnin(burnin=20)

    def test_length_mismatch(self):
        archive = _archive()
        with pytest.raises(DomainError):
            ChainArchive(
                theta=archive.theta,
                summaries=archive.summaries[:5],
                distances=archive.distances,
                accepted=archive.accepted,
                tau2_alpha=archive.tau2_alpha,
                tau2_beta=archive.tau2_beta,
                adaptation=archive.adaptation,
                seed=1,
                kernel=archive.kernel,
                names=archive.names,
                initial_theta=archive.initial_theta,
            )


class TestABCMCMC:
    def test_chain_is_reproducible(self, simulator, calculator, s_obs, kernel, truth_theta, init_cov):
        def run():
            return abc_mcmc(simulator.clone(), calculator, s_obs, kernel, truth_theta, init_cov, iters=25, seed=9)

        first, second = run(), run()
        np.testing.assert_array_equal(first.theta, second.theta)
        np.testing.assert_array_equal(first.accepted, second.accepted)
        assert first.iterations == 25
        assert np.all(first.distances >= 0)
        assert np.all(first.tau2_beta > 0)

    def test_rejected_steps_repeat_state(self, simulator, calculator, s_obs, kernel, truth_theta, init_cov):
        archive = abc_mcmc(simulator, calculator, s_obs, kernel, truth_theta, init_cov, iters=25, seed=3)
        for g in range(1, archive.iterations):
            if not archive.accepted[g]:
                np.testing.assert_array_equal(archive.theta[g], archive.theta[g - 1])

    def test_sampler_runs_chains(self, simulator, calculator, s_obs, kernel, truth_theta, init_cov, silent_logger):
        sampler = ABCMCMCSampler(simulator, calculator, silent_logger, log_every=10)
        archives = sampler.sample(
            s_obs, kernel=kernel, init_theta=truth_theta, init_cov=init_cov, iters=15, chains=2, seed=5, threads=2
        )
        assert len(archives) == 2
        assert archives[0].seed != archives[1].seed
        assert sampler.get_sampler_name() == "abc-mcmc"

    def test_requires_initialisation(self, simulator, calculator, s_obs, silent_logger):
        with pytest.raises(ConfigError):
            ABCMCMCSampler(simulator, calculator, silent_logger).sample(s_obs)


class TestRejection:
    def test_minimum_retained(self, simulator, calculator, s_obs, kernel, silent_logger):
        with pytest.raises(ConfigError):
            RejectionSampler(simulator, calculator, silent_logger).sample(s_obs, kernel=kernel, G=100, keep=0.1)

    @pytest.mark.slow
    def test_keeps_closest(self, simulator, calculator, s_obs, kernel, silent_logger):
        sample = RejectionSampler(simulator, calculator, silent_logger).sample(
            s_obs, kernel=kernel, G=200, keep=0.25, seed=2, threads=2
        )
        assert sample.size == 50
        assert np.all(np.diff(sample.distances) >= 0)
        assert sample.info["threshold"] == sample.distances[-1]
        np.testing.assert_allclose(sample.weights, 1 / 50)
        assert sample.sampler == "rejection"


@pytest.mark.slow
def test_importance_weights(simulator, calculator, s_obs, kernel, truth_theta, init_cov, silent_logger):
    sample = ImportanceSampler(simulator, calculator, silent_logger).sample(
        s_obs, kernel=kernel, init_theta=truth_theta, init_cov=init_cov, G=60, inflation=4.0, seed=1
    )
    assert sample.size == 60
    assert sample.weights.sum() == pytest.approx(1.0)
    assert 1.0 <= sample.info["ess"] <= 60 + 1e-9
    assert sample.info["half_mass_carriers"] >= 1
