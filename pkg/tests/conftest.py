"""Shared fixtures: a hand-checked tree, tiny configs and tiny rollouts."""

from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pytest

from pmp_reasoner.application.generate_dataset import generate_rollouts, supervise
from pmp_reasoner.domain.entities import ExperimentConfig, ModelKind, Operation, Rollout
from pmp_reasoner.domain.segment_tree import VersionedTree
from pmp_reasoner.modeling.params import ModelParams, components_for

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def sample_array():
    return [5, 2, 8, 1, 7]


@pytest.fixture
def sample_tree(sample_array) -> VersionedTree:
    return VersionedTree.build(sample_array)


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return ExperimentConfig(
        k=3,
        updates=2,
        queries=2,
        train_rollouts=4,
        eval_rollouts=2,
        iterations=3,
        batch_size=2,
        hidden_dim=8,
        processor_steps=2,
        seeds=[0],
        log_every=1,
        eval_every=0,
        checkpoint_every=0,
    )


@pytest.fixture
def tiny_rollouts():
    return generate_rollouts(seed=11, size=3, updates=2, queries=2, count=4, max_workers=1)


@pytest.fixture
def handmade_rollout() -> Rollout:
    """build([5,2,8,1,7]), two updates, then queries against every version."""
    ops = [
        Operation.update(0, 9),
        Operation.update(3, 4),
        Operation.query(1, 3, 0),
        Operation.query(0, 4, 1),
        Operation.query(3, 4, 2),
    ]
    return supervise([5, 2, 8, 1, 7], ops)


@pytest.fixture
def make_params() -> Callable[..., ModelParams]:
    def factory(config: ExperimentConfig, kind: Optional[ModelKind] = None, seed: int = 0) -> ModelParams:
        return ModelParams.initialize(
            config.hidden_dim,
            np.random.default_rng(seed),
            components_for(kind or config.model, config.shared_processor),
        )

    return factory
