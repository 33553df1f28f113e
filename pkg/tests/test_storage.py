import numpy as np
import pandas as pd
import pytest

from copula_abc.core.adjustment import AdjustedSample
from copula_abc.core.gibbs import DependenceInit, IndependenceFit
from copula_abc.core.samplers import AdaptationState, ChainArchive, WeightedSample
from copula_abc.core.summaries import KernelSpec
from copula_abc.errors import ConfigError, CopulaABCError
from copula_abc.storage import (
    RunManifest,
    read_adjusted,
    read_chain,
    read_dataset,
    read_design,
    read_initialization,
    read_manifest,
    read_weighted_sample,
    write_adjusted,
    write_chain,
    write_dataset,
    write_design,
    write_initialization,
    write_table,
    write_weighted_sample,
)


def test_design_round_trip(design, tmp_path):
    predictors, margins = write_design(design, tmp_path / "predictors.csv")
    assert margins.name == "margins.csv"
    restored = read_design(predictors)
    assert restored.predictor_names == design.predictor_names
    assert restored.margins == design.margins
    np.testing.assert_array_equal(restored.cells, design.cells)
    np.testing.assert_array_equal(restored.predictors, design.predictors)


def test_dataset_round_trip(design, simulator, truth_theta, tmp_path):
    dataset = simulator.simulate(truth_theta, 4)
    path = write_dataset(dataset, tmp_path / "dataset.csv")
    np.testing.assert_array_equal(read_dataset(path, design).values, dataset.values)


def test_dataset_must_match_design(design, simulator, truth_theta, tmp_path):
    dataset = simulator.simulate(truth_theta, 4)
    path = write_dataset(dataset, tmp_path / "dataset.csv")
    frame = pd.read_csv(path).iloc[:-1]
    write_table(frame, path)
    with pytest.raises(ConfigError):
        read_dataset(path, design)


def test_missing_file(tmp_path, design):
    with pytest.raises(ConfigError):
        read_dataset(tmp_path / "absent.csv", design)


def test_chain_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    archive = ChainArchive(
        theta=rng.normal(size=(12, 2)),
        summaries=rng.normal(size=(12, 2)),
        distances=rng.exponential(size=12),
        accepted=rng.random(12) < 0.3,
        tau2_alpha=rng.gamma(2.0, size=12),
        tau2_beta=rng.gamma(2.0, size=12),
        adaptation=AdaptationState(eta=1.3, mean=rng.normal(size=2), cov=np.eye(2), step=12),
        seed=42,
        kernel=KernelSpec(bandwidth=10.0, scaling=np.array([1.0, 2.0])),
        names=("alpha:intercept", "rho:t"),
        initial_theta=np.zeros(2),
        failures=3,
    )
    restored = read_chain(write_chain(archive, tmp_path / "chain_0.csv"))
    np.testing.assert_array_equal(restored.theta, archive.theta)
    np.testing.assert_array_equal(restored.accepted, archive.accepted)
    np.testing.assert_array_equal(restored.kernel.scaling, archive.kernel.scaling)
    assert restored.adaptation.eta == archive.adaptation.eta
    assert restored.adaptation.step == 12
    assert (restored.seed, restored.failures, restored.names) == (42, 3, archive.names)


def test_weighted_sample_round_trip(tmp_path):
    sample = WeightedSample(
        theta=np.arange(6.0).reshape(3, 2),
        weights=np.array([0.2, 0.3, 0.5]),
        summaries=np.ones((3, 2)),
        distances=np.array([0.1, 0.2, 0.3]),
        names=("a", "b"),
        sampler="importance",
        info={"ess": 2.6},
    )
    restored = read_weighted_sample(write_weighted_sample(sample, tmp_path / "sample.csv"))
    np.testing.assert_array_equal(restored.weights, sample.weights)
    assert restored.sampler == "importance"
    assert restored.info == {"ess": 2.6}


def test_adjusted_round_trip(tmp_path):
    samples = {
        "rho:t": AdjustedSample(values=np.array([0.1, 0.2]), weights=np.ones(2), estimand="rho:t", scale="z"),
        "beta:x1": AdjustedSample(values=np.array([1.0]), weights=np.ones(1), estimand="beta:x1", skipped=True),
    }
    restored = read_adjusted(write_adjusted(samples, tmp_path / "adjusted.csv"))
    assert set(restored) == set(samples)
    assert restored["rho:t"].scale == "z"
    assert restored["beta:x1"].skipped
    np.testing.assert_array_equal(restored["rho:t"].values, [0.1, 0.2])


def test_initialization_round_trip(tmp_path):
    marginal = IndependenceFit(
        theta_tilde=np.array([0.1, 0.2]),
        sigma_tilde=np.eye(2),
        chain=np.ones((5, 2)),
        names=("beta:intercept", "beta:x1"),
    )
    dependence = DependenceInit(
        theta_tilde=np.array([0.3]), sigma_tilde=np.array([[0.01]]), retained=np.full((4, 1), 0.3), redraws=2
    )
    path = write_initialization(marginal, dependence, np.array([0.1, 0.2, 0.3]), np.eye(3), tmp_path / "init.json")
    assert (tmp_path / "init_m0.csv").exists()
    restored_m, restored_d, theta, cov = read_initialization(path)
    assert restored_m.names == marginal.names
    assert np.isnan(restored_m.shift_acceptance)
    assert restored_d.redraws == 2
    assert restored_d.retained.shape == (4, 1)
    np.testing.assert_array_equal(theta, [0.1, 0.2, 0.3])
    assert cov.shape == (3, 3)


class TestManifest:
    def test_finish_writes_manifest(self, tmp_path):
        output = write_table(pd.DataFrame({"x": [1]}), tmp_path / "x.csv")
        manifest = RunManifest(command="simulate", config_digest="0" * 64, seed=1)
        manifest.add_file("x", output)
        path = manifest.finish(tmp_path)
        restored = read_manifest(tmp_path)
        assert path.name == "manifest.json"
        assert restored.files == {"x": str(output)}
        assert restored.finished_at is not None

    def test_missing_output_file(self, tmp_path):
        manifest = RunManifest(command="simulate", config_digest="0" * 64, seed=1)
        manifest.add_file("dataset", tmp_path / "dataset.csv")
        with pytest.raises(CopulaABCError):
            manifest.finish(tmp_path)

    def test_digest_length_validated(self):
        with pytest.raises(ValueError):
            RunManifest(command="simulate", config_digest="abc", seed=1)
