"""
PMP Reasoner

Persistent Message Passing trained to answer historical range-minimum
queries over a persistent segment tree, with overwriting and oracle MPNN
baselines for comparison.
"""

__version__ = "0.1.0"
__description__ = "Persistent Message Passing on persistent segment trees"

# Public API exports
from .application.evaluation import EvaluateModelUseCase, compare_reports
from .application.generate_dataset import GenerateDatasetUseCase, generate_rollouts
from .application.oracle_self_test import OracleSelfTestUseCase
from .application.training import TrainModelUseCase
from .domain.entities import EvalReport, ExperimentConfig, ModelKind, Operation, Rollout
from .domain.errors import PMPError
from .domain.segment_tree import VersionedTree
from .infrastructure.config_loader import YamlConfigLoader, load_experiment_configuration

__all__ = [
    "EvaluateModelUseCase",
    "compare_reports",
    "GenerateDatasetUseCase",
    "generate_rollouts",
    "OracleSelfTestUseCase",
    "TrainModelUseCase",
    "EvalReport",
    "ExperimentConfig",
    "ModelKind",
    "Operation",
    "Rollout",
    "PMPError",
    "VersionedTree",
    "YamlConfigLoader",
    "load_experiment_configuration",
]
