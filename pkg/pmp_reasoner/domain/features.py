"""
Operation featurisation for the segment-tree task.

Features are first computed per entity (tree position) and then broadcast to
every hidden state that is a copy of that entity via ``expand``.

Channel layout (width 10):
    0     is_leaf                      structural, every step
    1     is_update_target             update steps only
    2..5  4-bit value x, MSB first     update steps only
    6     is_query_left_bound          query steps only
    7     is_query_right_bound         query steps only
    8     is_left_child                structural, every step
    9     is_right_child               structural, every step (root: 8 = 9 = 0)
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .entities import Operation
from .errors import ContractViolationError
from .segment_tree import VersionedTree

FEATURE_WIDTH = 10
VALUE_BITS = 4

IS_LEAF = 0
UPDATE_TARGET = 1
VALUE_SLICE = slice(2, 2 + VALUE_BITS)
QUERY_LEFT = 6
QUERY_RIGHT = 7
LEFT_CHILD = 8
RIGHT_CHILD = 9

STRUCTURAL_CHANNELS = (IS_LEAF, LEFT_CHILD, RIGHT_CHILD)
UPDATE_CHANNELS = (UPDATE_TARGET, 2, 3, 4, 5)
QUERY_CHANNELS = (QUERY_LEFT, QUERY_RIGHT)


def to_bits(value: int) -> List[int]:
    """4-bit binary encoding, most significant bit first."""
    return [(value >> shift) & 1 for shift in range(VALUE_BITS - 1, -1, -1)]


def from_bits(bits: Sequence[int]) -> int:
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


@dataclass(frozen=True)
class EntityLayout:
    """Structural roles of the n tree positions of a version-0 tree."""

    size: int
    is_leaf: np.ndarray
    is_left_child: np.ndarray
    is_right_child: np.ndarray
    parent: List[Optional[int]]
    leaf_entities: List[int]

    @property
    def entity_count(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return self.entity_count - 1

    @classmethod
    def from_tree(cls, tree: VersionedTree) -> "EntityLayout":
        n = tree.initial_node_count
        is_leaf = np.zeros(n)
        is_left = np.zeros(n)
        is_right = np.zeros(n)
        parent: List[Optional[int]] = [None] * n
        for node in tree.nodes[:n]:
            if node.is_leaf:
                is_leaf[node.id] = 1.0
                continue
            assert node.left is not None and node.right is not None
            is_left[node.left] = 1.0
            is_right[node.right] = 1.0
            parent[node.left] = node.id
            parent[node.right] = node.id
        leaf_entities = [tree.leaf_entity(i) for i in range(tree.size)]
        return cls(tree.size, is_leaf, is_left, is_right, parent, leaf_entities)

    def tree_edges(self) -> List[tuple]:
        """(parent, child) entity pairs of the fixed tree shape."""
        return [(p, c) for c, p in enumerate(self.parent) if p is not None]

    def structural_features(self) -> np.ndarray:
        features = np.zeros((self.entity_count, FEATURE_WIDTH))
        features[:, IS_LEAF] = self.is_leaf
        features[:, LEFT_CHILD] = self.is_left_child
        features[:, RIGHT_CHILD] = self.is_right_child
        return features


@dataclass(frozen=True)
class OperationFeatures:
    """Per-state operation features plus the per-state time stamps."""

    features: np.ndarray
    time_stamps: np.ndarray

    @property
    def state_count(self) -> int:
        return self.features.shape[0]


def entity_features(layout: EntityLayout, op: Operation) -> np.ndarray:
    """n x 10 feature matrix of an operation over the tree positions."""
    features = layout.structural_features()
    if op.is_update:
        assert op.k is not None and op.x is not None
        features[layout.leaf_entities[op.k], UPDATE_TARGET] = 1.0
        features[:, VALUE_SLICE] = np.asarray(to_bits(op.x), dtype=float)
    else:
        assert op.a is not None and op.b is not None
        features[layout.leaf_entities[op.a], QUERY_LEFT] = 1.0
        features[layout.leaf_entities[op.b], QUERY_RIGHT] = 1.0
    return features


def expand(features: np.ndarray, entities: Sequence[int]) -> np.ndarray:
    """Broadcast entity rows onto hidden states: row j is features[entity(j)]."""
    index = np.asarray(entities, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= features.shape[0]):
        raise ContractViolationError(
            f"lineage references entities outside [0, {features.shape[0]})"
        )
    return features[index]


def encode_operation(
    layout: EntityLayout,
    op: Operation,
    entities: Sequence[int],
    time_stamps: Sequence[int],
) -> OperationFeatures:
    """Features of ``op`` for every hidden state described by the lineage."""
    if len(entities) != len(time_stamps):
        raise ContractViolationError("lineage entities and time stamps differ in length")
    return OperationFeatures(
        features=expand(entity_features(layout, op), entities),
        time_stamps=np.asarray(time_stamps, dtype=float),
    )
