import pytest

from pmp_reasoner.domain.entities import ExperimentConfig, ModelKind, RelevanceContext
from pmp_reasoner.domain.errors import ConfigurationError
from pmp_reasoner.infrastructure.config_loader import (
    THREADS_ENV,
    ConfigurationValidator,
    YamlConfigLoader,
    effective_config,
    load_experiment_configuration,
    resolve_worker_count,
)

from .conftest import REPO_ROOT


def write(tmp_path, text):
    path = tmp_path / "config.yml"
    path.write_text(text)
    return path


@pytest.mark.parametrize("name", ["desk.yml", "paper.yml"])
def test_shipped_configs_load(name):
    config = load_experiment_configuration(REPO_ROOT / "config" / name)
    assert config.model is ModelKind.PMP
    assert config.relevance_context is RelevanceContext.CANDIDATE
    assert config.eval_k == 10


def test_desk_values():
    config = YamlConfigLoader(REPO_ROOT / "config" / "desk.yml").load_configuration()
    assert (config.k, config.updates, config.queries) == (5, 5, 5)
    assert config.seeds == [0, 1, 2]


def test_empty_file_gives_defaults(tmp_path):
    assert YamlConfigLoader(write(tmp_path, "")).load_configuration() == ExperimentConfig()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        YamlConfigLoader(tmp_path / "nope.yml").load_configuration()


def test_invalid_yaml(tmp_path):
    with pytest.raises(ConfigurationError, match="Invalid YAML"):
        YamlConfigLoader(write(tmp_path, "k: [1, 2")).load_configuration()


def test_unknown_keys(tmp_path):
    with pytest.raises(ConfigurationError, match="hidden_size"):
        YamlConfigLoader(write(tmp_path, "hidden_size: 4\n")).load_configuration()


def test_nested_keys(tmp_path):
    with pytest.raises(ConfigurationError, match="flat"):
        YamlConfigLoader(write(tmp_path, "training:\n  iterations: 4\n")).load_configuration()


def test_invalid_values(tmp_path):
    with pytest.raises(ConfigurationError, match="Invalid configuration values"):
        YamlConfigLoader(write(tmp_path, "k: 0\n")).load_configuration()


def test_overrides(tmp_path):
    config = load_experiment_configuration(
        write(tmp_path, "iterations: 10\n"), {"iterations": 3, "model": "oracle"}
    )
    assert config.iterations == 3
    assert config.model is ModelKind.ORACLE


def test_validation_issues_are_raised(tmp_path):
    with pytest.raises(ConfigurationError, match="distinct"):
        load_experiment_configuration(write(tmp_path, "seeds: [1, 1]\n"))


@pytest.mark.parametrize(
    "fields,fragment",
    [
        ({"seeds": []}, "At least one"),
        ({"model": "oracle", "queries": 0}, "queries must be > 0"),
        ({"batch_size": 8, "train_rollouts": 4}, "exceeds train_rollouts"),
        ({"updates": 8, "queries": 8, "time_horizon": 10}, "time_horizon"),
    ],
)
def test_validator(fields, fragment):
    issues = ConfigurationValidator().validate_configuration(ExperimentConfig(**fields))
    assert any(fragment in issue for issue in issues)


def test_effective_config_is_json_ready():
    view = effective_config(ExperimentConfig())
    assert view["model"] == "pmp"
    assert view["relevance_context"] == "candidate"


def test_worker_count(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert resolve_worker_count() == 4
    monkeypatch.setenv(THREADS_ENV, "2")
    assert resolve_worker_count() == 2


@pytest.mark.parametrize("raw", ["zero", "0"])
def test_bad_worker_count(monkeypatch, raw):
    monkeypatch.setenv(THREADS_ENV, raw)
    with pytest.raises(ConfigurationError):
        resolve_worker_count()
