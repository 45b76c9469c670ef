"""
Configuration loading infrastructure.
Flat key-value YAML files map one-to-one onto ExperimentConfig fields.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import yaml
from pydantic import ValidationError

from ..domain.entities import ExperimentConfig, ModelKind
from ..domain.errors import ConfigurationError

THREADS_ENV = "PMP_THREADS"
DEFAULT_WORKERS = 4


class YamlConfigLoader:
    """Loads an experiment configuration from a flat YAML mapping."""

    def __init__(self, config_path: Optional[Path] = None):
        """Initialize with optional custom config path."""
        self.config_path = config_path or Path("config/desk.yml")

    def load_configuration(self) -> ExperimentConfig:
        """Load and parse the experiment configuration."""
        if not self.config_path.exists():
            raise ConfigurationError(f"Configuration file not found: {self.config_path}")

        try:
            with open(self.config_path, "r", encoding="utf-8") as file:
                raw_config = yaml.safe_load(file) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML syntax: {e}")

        return self._parse_configuration(raw_config)

    def _parse_configuration(self, raw_config: Any) -> ExperimentConfig:
        if not isinstance(raw_config, dict):
            raise ConfigurationError("Configuration must be a key-value mapping")

        nested = [key for key, value in raw_config.items() if isinstance(value, dict)]
        if nested:
            raise ConfigurationError(f"Configuration must be flat; nested keys: {', '.join(nested)}")

        unknown = sorted(set(raw_config) - set(ExperimentConfig.model_fields))
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")

        try:
            return ExperimentConfig(**raw_config)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration values: {e}")


class ConfigurationValidator:
    """Cross-field checks pydantic field constraints cannot express."""

    def validate_configuration(self, config: ExperimentConfig) -> List[str]:
        """Validate configuration and return list of issues found."""
        issues = []

        if not config.seeds:
            issues.append("At least one training seed is required")
        if len(set(config.seeds)) != len(config.seeds):
            issues.append("Training seeds must be distinct")
        if config.queries == 0 and config.model is ModelKind.ORACLE:
            issues.append("The oracle MPNN is only supervised on queries; queries must be > 0")
        if config.batch_size > config.train_rollouts:
            issues.append(
                f"batch_size {config.batch_size} exceeds train_rollouts {config.train_rollouts}"
            )
        if config.updates + config.queries > 0 and config.time_horizon < config.updates + config.queries:
            issues.append(
                f"time_horizon {config.time_horizon} is shorter than a training rollout "
                f"({config.updates + config.queries} steps)"
            )

        return issues


def load_experiment_configuration(
    config_path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """Convenience function to load, override and validate configuration."""
    config = YamlConfigLoader(config_path).load_configuration()
    if overrides:
        try:
            config = ExperimentConfig(**{**config.model_dump(), **overrides})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration override: {e}")

    issues = ConfigurationValidator().validate_configuration(config)
    if issues:
        raise ConfigurationError(
            "Configuration validation failed:\n" + "\n".join(f"- {issue}" for issue in issues)
        )
    return config


def effective_config(config: ExperimentConfig) -> Dict[str, Any]:
    """Flat JSON-compatible view of a configuration, used for headers and checkpoints."""
    return config.model_dump(mode="json")


def resolve_worker_count(default: int = DEFAULT_WORKERS) -> int:
    """Thread count for parallel rollout work, overridable through PMP_THREADS."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got '{raw}'")
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be at least 1, got {value}")
    return value
