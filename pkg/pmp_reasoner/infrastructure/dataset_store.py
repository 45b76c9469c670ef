"""
Line-delimited rollout datasets: one JSON record per rollout, each carrying
an explicit ``schema_version``.
"""

import hashlib
import json
from pathlib import Path
from typing import Iterable, List

from pydantic import ValidationError

from ..domain.entities import SCHEMA_VERSION, Rollout
from ..domain.errors import DatasetParseError, SchemaVersionError


def write_dataset(rollouts: Iterable[Rollout], path: Path) -> Path:
    """Write rollouts one per line; output bytes depend only on the rollouts."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rollout in rollouts:
            f.write(rollout.model_dump_json())
            f.write("\n")
    return path


def read_dataset(path: Path) -> List[Rollout]:
    """Read every rollout of a dataset file."""
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")

    rollouts = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetParseError(line_number, f"invalid JSON: {e.msg}")
            if not isinstance(raw, dict):
                raise DatasetParseError(line_number, "record is not an object")

            version = raw.get("schema_version")
            if version != SCHEMA_VERSION:
                raise SchemaVersionError(
                    f"{path}:{line_number}: schema_version {version!r}, expected {SCHEMA_VERSION}"
                )
            try:
                rollouts.append(Rollout.model_validate(raw))
            except ValidationError as e:
                raise DatasetParseError(line_number, str(e))
    return rollouts


def dataset_digest(path: Path) -> str:
    """SHA-256 of the dataset bytes; identifies datasets across reports."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
