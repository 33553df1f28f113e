import numpy as np
import pandas as pd
import pytest

from copula_abc.core.diagnostics import (
    PredictiveCheck,
    StatisticBattery,
    TestStatistics,
    autocorrelation,
    combined_ess,
    convergence_table,
    dependence_statistics,
    effective_sample_size,
    gelman_rubin,
    marginal_statistics,
    pair_label,
    posterior_predictive_check,
    ppp,
    ppp_histogram,
    spearman,
    two_sided_ppp,
)
from copula_abc.core.samplers import AdaptationState, ChainArchive
from copula_abc.core.summaries import KernelSpec
from copula_abc.errors import DomainError, UndefinedStatistic


def _ar1(phi: float, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = rng.normal()
    for t in range(1, n):
        x[t] = phi * x[t - 1] + rng.normal()
    return x


class TestSpearman:
    def test_known_value(self):
        assert spearman([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)

    def test_ties_use_mid_ranks(self):
        assert spearman([1, 1, 2, 3], [1, 2, 3, 4]) == pytest.approx(0.9486832980505138)

    def test_constant_is_undefined(self):
        with pytest.raises(UndefinedStatistic):
            spearman([1, 1, 1], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(DomainError):
            spearman([1, 2], [2, 1])


class TestGelmanRubin:
    def test_iid_chains_near_one(self):
        rng = np.random.default_rng(0)
        chains = [rng.normal(size=2000) for _ in range(3)]
        assert gelman_rubin(chains) == pytest.approx(1.0, abs=0.02)

    def test_separated_chains_flagged(self):
        rng = np.random.default_rng(1)
        chains = [rng.normal(size=500), rng.normal(size=500) + 5.0]
        assert gelman_rubin(chains) > 1.5

    def test_identical_chains(self):
        chain = np.random.default_rng(2).normal(size=100)
        assert gelman_rubin([chain, chain]) == pytest.approx(np.sqrt(99 / 100))

    def test_validation(self):
        with pytest.raises(DomainError):
            gelman_rubin([np.zeros(20)])
        with pytest.raises(DomainError):
            gelman_rubin([np.zeros(5), np.ones(5)])
        with pytest.raises(UndefinedStatistic):
            gelman_rubin([np.zeros(20), np.ones(20)])


class TestEffectiveSampleSize:
    def test_iid(self):
        chain = np.random.default_rng(3).normal(size=2000)
        assert 1000 < effective_sample_size(chain) < 4000

    def test_autocorrelated_chain(self):
        assert effective_sample_size(_ar1(0.9, 2000, 4)) < 400

    def test_combined(self):
        rng = np.random.default_rng(5)
        chains = [rng.normal(size=500), rng.normal(size=500)]
        assert combined_ess(chains) == pytest.approx(sum(effective_sample_size(c) for c in chains))

    def test_autocorrelation_starts_at_one(self):
        rho = autocorrelation(_ar1(0.5, 500, 6))
        assert rho[0] == pytest.approx(1.0)
        assert rho[1] == pytest.approx(0.5, abs=0.1)
        with pytest.raises(UndefinedStatistic):
            autocorrelation(np.ones(20))


def test_convergence_table():
    rng = np.random.default_rng(7)

    def archive(shift):
        n = 60
        return ChainArchive(
            theta=np.column_stack([rng.normal(size=n), rng.normal(size=n) + shift]),
            summaries=np.zeros((n, 2)),
            distances=np.zeros(n),
            accepted=np.ones(n, dtype=bool),
            tau2_alpha=np.ones(n),
            tau2_beta=np.ones(n),
            adaptation=AdaptationState(eta=1.0, mean=np.zeros(2), cov=np.eye(2)),
            seed=0,
            kernel=KernelSpec(bandwidth=1.0, scaling=np.ones(2)),
            names=("a", "b"),
            initial_theta=np.zeros(2),
        )

    table = convergence_table([archive(0.0), archive(6.0)], burnin=10)
    assert table.columns.tolist() == ["parameter", "rhat", "ess", "flagged"]
    assert table.set_index("parameter").loc["b", "flagged"]
    assert not table.set_index("parameter").loc["a", "flagged"]


def test_two_sided_ppp():
    t_rep = np.array([1.0, 2.0, 3.0, 4.0])
    assert two_sided_ppp(4.0, t_rep) == pytest.approx(0.5)
    assert two_sided_ppp(2.5, t_rep) == 1.0
    assert two_sided_ppp(10.0, t_rep) == 0.0
    with pytest.raises(UndefinedStatistic):
        two_sided_ppp(1.0, np.array([np.nan]))


class TestStatisticsBattery:
    def test_marginal_statistics(self, simulator, truth_theta):
        stats = marginal_statistics(simulator.simulate(truth_theta, 0))
        for name in ("mean", "var", "p_nonzero", "mean_nonzero", "p_ge_3", "p_ge_8", "tertile_x1"):
            assert name in stats
        assert 0.0 <= stats["p_nonzero"] <= 1.0

    def test_dependence_statistics(self, simulator, truth_theta, design):
        values, counts = dependence_statistics(simulator.simulate(truth_theta, 0), [(0, 1)])
        label = pair_label(design, (0, 1))
        assert label == "(1,0)~(2,0)"
        assert counts[label] == design.n_individuals
        assert -1.0 <= values[label] <= 1.0

    def test_invalid_correlation(self):
        with pytest.raises(DomainError):
            TestStatistics(t_M={}, t_R={"x": 1.5})

    def test_as_dict_prefixes(self):
        stats = TestStatistics(t_M={"mean": 1.0}, t_R={"p": 0.2})
        assert stats.as_dict() == {"t_M:mean": 1.0, "t_R:p": 0.2}


@pytest.mark.slow
def test_posterior_predictive_check(simulator, truth_theta, silent_logger):
    observed = simulator.simulate(truth_theta, 50)
    battery = StatisticBattery([(0, 1), (1, 2)])
    check = posterior_predictive_check(
        observed, truth_theta[None, :], None, simulator, battery, n_rep=30, seed=2, threads=2, logger=silent_logger
    )
    assert len(check.replicates) + check.failures == 30
    assert all(v is None or 0.0 <= v <= 1.0 for v in check.ppp.values())
    boxplot = check.boxplot_table()
    assert {"statistic", "observed", "q2.5", "q50", "q97.5"} <= set(boxplot.columns)
    table, fraction = ppp_histogram(check, min_pairs=100, bins=10)
    assert table["count"].sum() == 2
    assert 0.0 <= fraction <= 1.0


def test_single_statistic_ppp(simulator, truth_theta):
    observed = simulator.simulate(truth_theta, 1)
    value = ppp(observed, truth_theta, lambda d: float(d.values.mean()), simulator, n_rep=20, seed=3)
    assert 0.0 <= value <= 1.0


def test_ppp_histogram_respects_min_pairs():
    observed = TestStatistics(t_M={}, t_R={"a": 0.1, "b": 0.2}, pair_counts={"a": 50, "b": 500})
    check = PredictiveCheck(observed=observed, replicates=pd.DataFrame(), ppp={"t_R:a": 0.01, "t_R:b": 0.5})
    table, fraction = ppp_histogram(check, min_pairs=100, bins=4)
    assert table["count"].tolist() == [0, 0, 1, 0]
    assert fraction == 0.0
