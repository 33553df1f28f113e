import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from copula_abc.config.loader import ENV_OVERRIDES, config_digest, format_validation_error, load_config
from copula_abc.config.models import ABCConfig, AppConfig, StudyConfig
from copula_abc.errors import ConfigError

EXAMPLE = Path(__file__).resolve().parents[1] / "config-example.yaml"


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch, tmp_path):
    # .env из рабочей директории не должен попадать в тесты
    monkeypatch.chdir(tmp_path)
    for variable in ENV_OVERRIDES:
        monkeypatch.delenv(variable, raising=False)


def _write(tmp_path, text: str, name: str = "config.yaml") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults():
    config = load_config()
    assert config.model.family == "nb-hurdle"
    assert config.model.ages == [5, 9, 13, 17, 23]
    assert config.adjacency.preset == "M4"
    assert config.abc.h == 10.0 and config.abc.target_acceptance == 0.1
    assert config.seed == 0 and config.threads == 1


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="не найден"):
        load_config(tmp_path / "absent.yaml")


def test_unparseable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "model: [unclosed"))


def test_root_must_be_mapping(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "- 1\n- 2\n"))


def test_validation_error_lists_locations(tmp_path):
    path = _write(tmp_path, "abc:\n  h: -1\nthreads: 0\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    message = str(info.value)
    assert message.startswith("Ошибка валидации конфигурации:")
    assert "abc → h" in message
    assert "threads" in message


def test_format_validation_error():
    with pytest.raises(ValidationError) as info:
        AppConfig(unknown_section={})
    assert "unknown_section" in format_validation_error(info.value)


def test_env_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("COPULA_ABC_THREADS", "4")
    monkeypatch.setenv("COPULA_ABC_SEED", "17")
    monkeypatch.setenv("COPULA_ABC_LOG_DIR", str(tmp_path / "logs"))
    config = load_config(_write(tmp_path, "seed: 3\n"))
    assert config.threads == 4
    assert config.seed == 17
    assert config.logging.log_dir == str(tmp_path / "logs")


def test_json_config(tmp_path):
    payload = {"model": {"family": "PLAIN_NB", "n_individuals": 50}, "adjacency": {"preset": "m1"}}
    config = load_config(_write(tmp_path, json.dumps(payload), "config.json"))
    assert config.model.family == "plain-nb"
    assert config.model.n_individuals == 50
    assert config.adjacency.preset == "M1"


@pytest.mark.parametrize(
    "section, values",
    [
        ("model", {"family": "zip"}),
        ("adjacency", {"preset": "M9"}),
        ("logging", {"level": "verbose"}),
        ("abc", {"adjustment_mode": "sideways"}),
        ("study", {"fit_preset": "X"}),
    ],
)
def test_invalid_choices(section, values):
    with pytest.raises(ValidationError):
        AppConfig(**{section: values})


def test_burnin_must_precede_iters():
    with pytest.raises(ValidationError):
        ABCConfig(iters=100, burnin=100)
    with pytest.raises(ValidationError):
        ABCConfig(gibbs_iters=10, gibbs_burnin=20)
    with pytest.raises(ValidationError):
        StudyConfig(iters=10, burnin=10)


def test_study_methods_normalised_and_unique():
    assert StudyConfig(methods=[" MCMC:h=10 ", "m0"]).methods == ["mcmc:h=10", "m0"]
    with pytest.raises(ValidationError):
        StudyConfig(methods=["m0", "M0"])


def test_digest_is_stable():
    first, second = AppConfig(), AppConfig()
    assert config_digest(first) == config_digest(second)
    assert len(config_digest(first)) == 64
    assert config_digest(AppConfig(seed=1)) != config_digest(first)


def test_example_config_loads():
    config = load_config(EXAMPLE)
    assert config.adjacency.preset == "M4"
    assert config.model.truth.rho == {"ct": 0.012, "t": 0.12}
    assert "mcmc+reg:h=30" in config.study.methods
