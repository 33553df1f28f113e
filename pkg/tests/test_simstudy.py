import numpy as np
import pandas as pd
import pytest

from copula_abc.core.adjustment import AdjustedSample
from copula_abc.core.design import StudyTruth
from copula_abc.core.simstudy import (
    ZETA_GRID,
    IntervalSummary,
    MetricTable,
    SimulationStudy,
    StudyMethod,
    StudySettings,
    coverage_from_intervals,
    coverage_metrics,
    parse_method,
    rank_groupings,
    run_simulation_study,
)
from copula_abc.errors import ConfigError, DomainError


class TestParseMethod:
    def test_independence(self):
        assert parse_method("M0") == StudyMethod(name="M0", kind="independence")

    @pytest.mark.parametrize("label", ["m0+reg", "m0:h=1", "mcmc", "gibbs", "rejection+"])
    def test_invalid(self, label):
        with pytest.raises(ConfigError):
            parse_method(label)

    def test_mcmc(self):
        method = parse_method("mcmc:h=10")
        assert method == StudyMethod(name="MCMC h=10", kind="abc-mcmc", bandwidth=10.0)
        adjusted = parse_method("mcmc+reg:h=0.5")
        assert adjusted.name == "MCMC+Reg h=0.5"
        assert adjusted.adjusted and adjusted.bandwidth == 0.5

    def test_weighted_samplers(self):
        assert parse_method("rejection") == StudyMethod(name="Rejection", kind="rejection")
        importance = parse_method("importance+reg")
        assert importance.name == "Importance+Reg"
        assert importance.kind == "importance" and importance.adjusted


class TestSettings:
    def test_defaults(self):
        settings = StudySettings()
        assert (settings.B, settings.iters, settings.burnin) == (10, 20_000, 5_000)
        assert settings.adjustment_mode == "direct"

    def test_full_scale(self):
        settings = StudySettings.full_scale(chains=2)
        assert settings.B == 100 and settings.iters == 60_000 and settings.burnin == 10_000
        assert settings.rejection_G == settings.importance_G == 250_000
        assert settings.chains == 2

    @pytest.mark.parametrize("overrides", [{"B": 1}, {"iters": 100, "burnin": 100}])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            StudySettings(**overrides)


class TestCoverage:
    def test_point_mass_at_truth(self):
        summaries = [IntervalSummary.point_mass(0.3) for _ in range(4)]
        result = coverage_from_intervals(summaries, 0.3)
        np.testing.assert_array_equal(result.ecr, np.ones(len(ZETA_GRID)))
        assert result.oecs == 1.0
        assert result.width80 == 0.0

    def test_point_mass_away_from_truth(self):
        summaries = [IntervalSummary.point_mass(0.0)] * 3
        assert coverage_from_intervals(summaries, 0.3).oecs == 0.0

    def test_requires_two_replicates(self):
        with pytest.raises(DomainError):
            coverage_from_intervals([IntervalSummary.point_mass(0.0)], 0.0)

    def test_interval_from_sample(self):
        sample = AdjustedSample(values=np.linspace(0.0, 1.0, 1001), weights=np.ones(1001), estimand="x")
        summary = IntervalSummary.from_sample(sample)
        assert summary.mean == pytest.approx(0.5)
        assert summary.lower.shape == summary.upper.shape == ZETA_GRID.shape
        # интервалы вложены по ζ
        assert np.all(np.diff(summary.lower) <= 0) and np.all(np.diff(summary.upper) >= 0)
        k = int(np.argmin(np.abs(ZETA_GRID - 0.8)))
        assert summary.upper[k] - summary.lower[k] == pytest.approx(0.8, abs=0.01)

    def test_calibrated_posteriors(self):
        rng = np.random.default_rng(0)
        # апостериорное N(x, 1) при x ~ N(0, 1) и истине 0 калибровано
        samples = [
            AdjustedSample(values=rng.normal(x, 1.0, 400), weights=np.ones(400), estimand="x")
            for x in rng.normal(size=200)
        ]
        result = coverage_metrics(samples, 0.0)
        assert result.oecs == pytest.approx(0.5, abs=0.08)
        assert result.ecr[-1] > result.ecr[0]


def _metric_frame():
    rows = []
    for parameter, group in [("a", "theta_M"), ("b", "theta_M"), ("R:x", "theta_R"), ("rho:t", "theta_D")]:
        for method, bias, oecs in [("good", 0.01, 0.5), ("fair", 0.1, 0.6), ("poor", 0.5, 0.1)]:
            rows.append({
                "parameter": parameter, "group": group, "method": method, "truth": 0.0,
                "bias": bias, "rmse": 2 * bias, "oecs": oecs, "width80": 1.0, "replicates": 5,
            })
    return pd.DataFrame(rows)


class TestMetricTable:
    def test_validation(self):
        frame = _metric_frame()
        with pytest.raises(DomainError):
            MetricTable(frame.drop(columns=["oecs"]))
        with pytest.raises(DomainError):
            MetricTable(frame.assign(rmse=0.0))
        with pytest.raises(DomainError):
            MetricTable(frame.assign(oecs=1.5))

    def test_wide(self):
        table = MetricTable(_metric_frame())
        wide = table.wide("bias")
        assert wide.columns.tolist() == ["good", "fair", "poor"]
        assert wide.index.tolist() == ["a", "b", "R:x", "rho:t"]
        assert wide.loc["a", "poor"] == 0.5

    def test_rank_groupings(self):
        rankings = rank_groupings(MetricTable(_metric_frame()), np.random.default_rng(0))
        expected = {f"{m}/{g}" for m in ("bias", "rmse", "oecs", "overall") for g in ("theta_M", "theta_R", "combined")}
        assert set(rankings) == expected
        assert rankings["bias/combined"] == ("good", "fair", "poor")
        assert rankings["overall/theta_M"][0] == "good"

    def test_partial_parameters_skipped(self):
        frame = _metric_frame()
        frame = frame[~((frame["group"] == "theta_R") & (frame["method"] == "poor"))]
        rankings = rank_groupings(MetricTable(frame), np.random.default_rng(0))
        assert not any(key.endswith("/theta_R") for key in rankings)
        assert "bias/theta_M" in rankings


@pytest.fixture
def study_truth(nb_params):
    return StudyTruth(marginal=nb_params, preset="M1", rho={"t": 0.3})


@pytest.fixture
def tiny_settings():
    return StudySettings(
        B=2, iters=80, burnin=20, thin_size=None, gibbs_iters=200, gibbs_burnin=50,
        scaling_G=30, init_G=50, init_keep=0.1, rejection_G=500, rejection_keep=0.1, importance_G=100,
    )


def test_study_truth_table(design, study_truth, chain_adjacency, tiny_settings, silent_logger):
    study = SimulationStudy(
        design, study_truth, [chain_adjacency], [chain_adjacency], [parse_method("m0")],
        tiny_settings, silent_logger, pairs=[(0, 1)],
    )
    assert study.truth_values["rho:t"] == 0.3
    assert study.groups["rho:t"] == "theta_D"
    assert study.groups["alpha:intercept"] == "theta_M"
    label = "R:(1,0)~(2,0)"
    assert study.groups[label] == "theta_R"
    assert study.truth_values[label] == pytest.approx(2 * 0.3 / (1 + 0.3**2))


def test_study_requires_methods(design, study_truth, chain_adjacency, tiny_settings, silent_logger):
    with pytest.raises(ConfigError):
        SimulationStudy(design, study_truth, [chain_adjacency], [chain_adjacency], [], tiny_settings, silent_logger)


@pytest.mark.slow
def test_small_study(design, study_truth, chain_adjacency, tiny_settings, silent_logger):
    methods = ["m0", "mcmc:h=10", "mcmc+reg:h=10", "rejection"]
    result = run_simulation_study(
        study_truth, design, [chain_adjacency], methods, tiny_settings, seed=11,
        logger=silent_logger, pairs=[(0, 1)], threads=2,
    )
    frame = result.metrics.frame
    assert set(frame["method"]) <= {"M0", "MCMC h=10", "MCMC+Reg h=10", "Rejection"}
    assert set(result.failures) == {"M0", "MCMC h=10", "MCMC+Reg h=10", "Rejection"}
    assert np.all(frame["rmse"] >= frame["bias"].abs() - 1e-12)
    assert len(result.ecr) % len(ZETA_GRID) == 0
    # ℳ₀ фиксирует ρ = 0, поэтому интервалы не накрывают истину 0.3
    m0_rho = frame[(frame["method"] == "M0") & (frame["parameter"] == "rho:t")]
    assert m0_rho["oecs"].tolist() == [0.0]
    assert result.manifest["replicate_seeds"][0] != result.manifest["replicate_seeds"][1]
    assert result.manifest["B"] == 2
