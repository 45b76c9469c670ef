from collections import Counter

import numpy as np
import pytest

from pmp_reasoner.application.generate_dataset import (
    GenerateDatasetUseCase,
    generate_rollouts,
    sample_array,
    sample_rollout,
    sample_value,
    supervise,
)
from pmp_reasoner.domain.entities import Operation, OperationKind
from pmp_reasoner.domain.errors import InvalidInputError
from pmp_reasoner.infrastructure.dataset_store import read_dataset


class TestSampling:
    def test_values_in_range(self):
        rng = np.random.default_rng(0)
        values = [sample_value(rng) for _ in range(2000)]
        assert min(values) >= 1 and max(values) <= 15

    def test_two_stage_sampler_favours_large_values(self):
        rng = np.random.default_rng(1)
        counts = Counter(sample_value(rng) for _ in range(20000))
        # P(15) = H(15)/15 ~ 0.22, P(1) = 1/225
        assert counts[15] > 10 * counts[1]

    def test_array_shares_one_lower_bound(self):
        rng = np.random.default_rng(2)
        array = sample_array(8, rng)
        assert len(array) == 8
        assert all(1 <= v <= 15 for v in array)

    def test_rollout_layout(self):
        rollout = sample_rollout(5, 5, 5, np.random.default_rng(3))
        assert [op.kind for op in rollout.ops] == [OperationKind.UPDATE] * 5 + [OperationKind.QUERY] * 5
        assert rollout.update_count == 5 and rollout.query_count == 5
        assert len(rollout.supervision) == 10
        assert 24 <= rollout.supervision[-1].node_count <= 29
        for op in rollout.ops[5:]:
            assert 0 <= op.a <= op.b < 5
            assert 0 <= op.s <= 5

    def test_zero_updates(self):
        rollout = sample_rollout(4, 0, 3, np.random.default_rng(4))
        assert all(op.s == 0 for op in rollout.ops)
        assert rollout.supervision[-1].node_count == 7


class TestSupervise:
    def test_update_records(self, handmade_rollout):
        first, second = handmade_rollout.supervision[:2]
        assert first.relevance_mask == [8, 4, 2, 0]
        assert first.persist_mask == [8, 4, 2, 0]
        assert first.per_node_values == [1, 2, 2, 9]
        assert first.node_count == 13
        assert second.relevance_mask == [12, 7, 5]
        assert second.persist_mask == [8, 7, 5]
        assert second.per_node_values == [2, 4, 4]
        assert second.node_count == 16

    def test_query_records(self, handmade_rollout):
        queries = handmade_rollout.supervision[2:]
        assert [q.relevance_mask for q in queries] == [[1, 3, 5], [12], [14]]
        assert [q.answer for q in queries] == [1, 1, 4]
        assert all(q.node_count == 16 for q in queries)

    def test_version_steps(self, handmade_rollout):
        assert handmade_rollout.version_steps() == [0, 1, 2]

    def test_replay_matches_supervision(self, handmade_rollout):
        tree = handmade_rollout.replay_tree()
        assert len(tree.nodes) == 16
        assert tree.snapshot_array(2) == [9, 2, 8, 4, 7]

    def test_query_into_the_future_is_rejected(self):
        with pytest.raises(InvalidInputError):
            supervise([3, 4], [Operation.query(0, 1, 1)])


class TestGenerateRollouts:
    def test_deterministic_and_order_independent_of_workers(self):
        serial = generate_rollouts(7, 5, 5, 5, 12, max_workers=1)
        parallel = generate_rollouts(7, 5, 5, 5, 12, max_workers=4)
        assert [r.model_dump() for r in serial] == [r.model_dump() for r in parallel]

    def test_different_seeds_differ(self):
        a = generate_rollouts(1, 5, 5, 5, 5, max_workers=1)
        b = generate_rollouts(2, 5, 5, 5, 5, max_workers=1)
        assert [r.model_dump() for r in a] != [r.model_dump() for r in b]

    def test_mean_node_counts_after_updates(self):
        rollouts = generate_rollouts(0, 5, 5, 0, 1000, max_workers=2)
        means = [
            np.mean([r.supervision[u].node_count for r in rollouts]) for u in range(5)
        ]
        for observed, expected in zip(means, [12.4, 15.8, 19.2, 22.6, 26.0]):
            assert observed == pytest.approx(expected, abs=0.3)

    def test_mean_node_counts_after_updates_ten_leaves(self):
        # leaf paths have 5 nodes for four leaves and 4 for six: 4.4 per update
        rollouts = generate_rollouts(0, 10, 10, 0, 1000, max_workers=2)
        for u in range(10):
            observed = np.mean([r.supervision[u].node_count for r in rollouts])
            assert observed == pytest.approx(19 + 4.4 * (u + 1), abs=0.5)

    def test_use_case_writes_identical_files(self, tmp_path):
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        GenerateDatasetUseCase(max_workers=2).execute(7, 5, 5, 5, 6, first)
        GenerateDatasetUseCase(max_workers=3).execute(7, 5, 5, 5, 6, second)
        assert first.read_bytes() == second.read_bytes()
        assert len(read_dataset(first)) == 6
