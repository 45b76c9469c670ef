"""
Rollout sampling: arrays, update/query schedules and oracle supervision.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations_with_replacement
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..domain.entities import Operation, OperationKind, Rollout, StepSupervision
from ..domain.segment_tree import VALUE_MAX, VALUE_MIN, VersionedTree
from ..infrastructure.config_loader import resolve_worker_count
from ..infrastructure.dataset_store import write_dataset

logger = logging.getLogger(__name__)


def sample_value(rng: np.random.Generator) -> int:
    """Two-stage value: a lower bound L in [1, 15], then uniform in [L, 15]."""
    lower = int(rng.integers(VALUE_MIN, VALUE_MAX + 1))
    return int(rng.integers(lower, VALUE_MAX + 1))


def sample_array(size: int, rng: np.random.Generator) -> List[int]:
    """One lower bound for the whole array, elements uniform between it and 15."""
    lower = int(rng.integers(VALUE_MIN, VALUE_MAX + 1))
    return [int(v) for v in rng.integers(lower, VALUE_MAX + 1, size=size)]


def supervise(initial: Sequence[int], ops: Sequence[Operation]) -> Rollout:
    """Replay ``ops`` on the oracle and attach ground truth to every step."""
    tree = VersionedTree.build(initial)
    supervision: List[StepSupervision] = []

    for op in ops:
        if op.is_update:
            assert op.k is not None and op.x is not None
            path = tree.update_path(op.k)
            first_new = len(tree.nodes)
            tree.update(op.k, op.x)
            # copies are allocated leaf-first, the path is listed root-first
            new_ids = list(range(len(tree.nodes) - 1, first_new - 1, -1))
            supervision.append(
                StepSupervision(
                    kind=OperationKind.UPDATE,
                    relevance_mask=path,
                    persist_mask=[tree.nodes[i].entity for i in path],
                    per_node_values=[tree.nodes[i].value for i in new_ids],
                    node_count=len(tree.nodes),
                )
            )
        else:
            assert op.a is not None and op.b is not None and op.s is not None
            supervision.append(
                StepSupervision(
                    kind=OperationKind.QUERY,
                    relevance_mask=tree.canonical_cover(op.s, op.a, op.b),
                    answer=tree.query_min(op.s, op.a, op.b),
                    node_count=len(tree.nodes),
                )
            )

    return Rollout(size=len(initial), initial_array=list(initial), ops=list(ops), supervision=supervision)


def sample_rollout(size: int, updates: int, queries: int, rng: np.random.Generator) -> Rollout:
    """U random point updates followed by Q random historical range queries."""
    initial = sample_array(size, rng)
    ops: List[Operation] = []
    for _ in range(updates):
        k = int(rng.integers(0, size))
        ops.append(Operation.update(k, sample_value(rng)))

    ranges = list(combinations_with_replacement(range(size), 2))
    for _ in range(queries):
        a, b = ranges[int(rng.integers(0, len(ranges)))]
        s = int(rng.integers(0, updates + 1))
        ops.append(Operation.query(a, b, s))
    return supervise(initial, ops)


def generate_rollouts(
    seed: int,
    size: int,
    updates: int,
    queries: int,
    count: int,
    max_workers: Optional[int] = None,
) -> List[Rollout]:
    """``count`` rollouts, each drawn from its own seed derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(count)

    def one(child: np.random.SeedSequence) -> Rollout:
        return sample_rollout(size, updates, queries, np.random.default_rng(child))

    with ThreadPoolExecutor(max_workers=max_workers or resolve_worker_count()) as executor:
        return list(executor.map(one, children))


class GenerateDatasetUseCase:
    """Sample a rollout dataset and write it as JSON lines."""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers

    def execute(
        self,
        seed: int,
        size: int,
        updates: int,
        queries: int,
        count: int,
        output: Path,
    ) -> List[Rollout]:
        rollouts = generate_rollouts(seed, size, updates, queries, count, self.max_workers)
        write_dataset(rollouts, output)
        logger.info(
            "wrote %d rollouts (K=%d, U=%d, Q=%d, seed=%d) to %s",
            count, size, updates, queries, seed, output,
        )
        return rollouts
