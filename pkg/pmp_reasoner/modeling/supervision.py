"""
Translate oracle supervision (node ids of the persistent segment tree) into
per-state targets for whatever set of hidden states a model currently holds.

A model state corresponds to an oracle node when both copy the same entity
and the state was created at the step that produced the node's version.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..domain.entities import OperationKind, StepSupervision
from ..domain.segment_tree import VersionedTree


@dataclass(frozen=True)
class StepTargets:
    """Ground-truth masks over the current states plus value targets."""

    relevance: np.ndarray
    persistency: np.ndarray
    node_values: Dict[int, int] = field(default_factory=dict)
    answer: Optional[int] = None

    @property
    def relevant_states(self) -> List[int]:
        return [int(j) for j in np.flatnonzero(self.relevance)]

    @property
    def persisted_states(self) -> List[int]:
        return [int(j) for j in np.flatnonzero(self.persistency)]


def _node_keys(tree: VersionedTree, node_ids: Sequence[int]) -> List[Tuple[int, int]]:
    return [(tree.nodes[i].entity, tree.nodes[i].version) for i in node_ids]


def _new_values(record: StepSupervision, tree: VersionedTree) -> Dict[int, int]:
    if record.kind is not OperationKind.UPDATE:
        return {}
    return {
        tree.nodes[node_id].entity: value
        for node_id, value in zip(record.relevance_mask, record.per_node_values)
    }


def state_targets(
    entities: Sequence[int],
    time_stamps: Sequence[int],
    record: StepSupervision,
    tree: VersionedTree,
    version_steps: Sequence[int],
) -> StepTargets:
    """Targets over a growing state store (PMP)."""
    version_of_step = {step: version for version, step in enumerate(version_steps)}
    wanted = set(_node_keys(tree, record.relevance_mask))
    relevance = np.zeros(len(entities), dtype=bool)
    for j, (entity, stamp) in enumerate(zip(entities, time_stamps)):
        version = version_of_step.get(stamp)
        if version is not None and (entity, version) in wanted:
            relevance[j] = True
    persistency = relevance.copy() if record.kind is OperationKind.UPDATE else np.zeros_like(relevance)
    return StepTargets(relevance, persistency, _new_values(record, tree), record.answer)


def entity_targets(entity_count: int, record: StepSupervision, tree: VersionedTree) -> StepTargets:
    """Targets over one fixed state per entity (overwriting baselines, oracle)."""
    relevance = np.zeros(entity_count, dtype=bool)
    for entity, _ in _node_keys(tree, record.relevance_mask):
        relevance[entity] = True
    persistency = relevance.copy() if record.kind is OperationKind.UPDATE else np.zeros_like(relevance)
    return StepTargets(relevance, persistency, _new_values(record, tree), record.answer)
