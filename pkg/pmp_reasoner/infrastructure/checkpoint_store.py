"""
Parameter checkpoints as numpy ``.npz`` containers.

Each parameter is stored under ``param/<component>.<weight|bias>`` with its
shape and row-major float64 values; a JSON ``meta`` entry records the schema
version, model kind, seed, iteration and effective configuration.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

import numpy as np

from ..domain.entities import ExperimentConfig, ModelKind
from ..domain.errors import SchemaVersionError
from ..modeling.params import ModelParams

CHECKPOINT_SCHEMA_VERSION = 1
_PARAM_PREFIX = "param/"


@dataclass
class Checkpoint:
    kind: ModelKind
    seed: int
    iteration: int
    config: ExperimentConfig
    params: ModelParams


def save_checkpoint(
    path: Path,
    params: ModelParams,
    kind: ModelKind,
    config: ExperimentConfig,
    seed: int,
    iteration: int,
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    meta: Dict[str, Any] = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": kind.value,
        "seed": seed,
        "iteration": iteration,
        "hidden_dim": params.hidden_dim,
        "config": config.model_dump(mode="json"),
    }
    arrays = {f"{_PARAM_PREFIX}{name}": values for name, values in params.arrays().items()}
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")

    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"{path}: checkpoint schema_version {meta.get('schema_version')!r}, "
                f"expected {CHECKPOINT_SCHEMA_VERSION}"
            )
        arrays = {
            key[len(_PARAM_PREFIX):]: archive[key].astype(np.float64)
            for key in archive.files
            if key.startswith(_PARAM_PREFIX)
        }

    return Checkpoint(
        kind=ModelKind(meta["kind"]),
        seed=int(meta["seed"]),
        iteration=int(meta["iteration"]),
        config=ExperimentConfig(**meta["config"]),
        params=ModelParams.from_arrays(int(meta["hidden_dim"]), arrays),
    )
