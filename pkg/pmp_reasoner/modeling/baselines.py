"""
Comparison models: MPNNs that overwrite a fixed set of n states (entirely or
selectively) and an oracle MPNN that reads the correct snapshot directly.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from ..domain.entities import ExperimentConfig, ModelKind, Operation, RolloutMode, StepSupervision
from ..domain.errors import ContractViolationError, NoRelevantStateError
from ..domain.features import VALUE_SLICE, EntityLayout, entity_features, to_bits
from ..domain.segment_tree import VersionedTree
from .diff_core import SparseAdjacency, Tensor, add, constant, scale_rows
from .params import ModelParams
from .pmp_model import AdjacencyPair, MessagePassingCore, PersistentMessagePassing, StepPredictions, threshold
from .supervision import StepTargets, entity_targets

logger = logging.getLogger(__name__)


@dataclass
class FixedState:
    """n hidden vectors, one per entity, plus the step each was last written."""

    hidden: Tensor
    time_stamps: List[int]
    connectivity: SparseAdjacency

    @property
    def size(self) -> int:
        return len(self.time_stamps)

    def entity_of(self, j: int) -> int:
        return j


def _tree_connectivity(layout: EntityLayout) -> SparseAdjacency:
    return AdjacencyPair.from_layout(layout).connectivity()


class OverwritingMPNN(MessagePassingCore):
    """MPNN whose n states are overwritten every step, or only where φ fires."""

    def __init__(self, params: ModelParams, config: ExperimentConfig, selective: bool):
        super().__init__(params, config)
        self.selective = selective

    def start(self, layout: EntityLayout) -> FixedState:
        n = layout.entity_count
        return FixedState(
            constant(np.zeros((n, self.hidden_dim))), [0] * n, _tree_connectivity(layout)
        )

    def targets_for(
        self,
        state: FixedState,
        record: StepSupervision,
        tree: VersionedTree,
        version_steps: Sequence[int],
    ) -> StepTargets:
        return entity_targets(state.size, record, tree)

    def advance(
        self,
        state: FixedState,
        layout: EntityLayout,
        tree: VersionedTree,
        op: Operation,
        t: int,
        snapshot_step: int,
        mode: RolloutMode,
        targets: Optional[StepTargets] = None,
    ) -> StepPredictions:
        teacher = mode is RolloutMode.TEACHER_FORCED
        if teacher and targets is None:
            raise ContractViolationError("teacher forcing needs ground-truth targets")

        hidden = state.hidden
        v, z, candidates = self.encode(
            hidden, state.time_stamps, entity_features(layout, op), state.connectivity, t, snapshot_step
        )
        relevance_latents = self.process(v, SparseAdjacency.self_loops(state.size), relevance_pass=True)

        relevance_logits = self.relevance_logits(relevance_latents)
        relevance_predicted = threshold(relevance_logits)
        relevance_used = targets.relevance if teacher and targets is not None else relevance_predicted

        if self.selective:
            persistency_logits: Optional[Tensor] = self.persistency_logits(candidates, relevance_used)
            persistency_predicted = threshold(persistency_logits) & relevance_used
            persistency_used = targets.persistency if teacher and targets is not None else persistency_predicted
        else:
            persistency_logits = None
            persistency_predicted = np.ones(state.size, dtype=bool)
            persistency_used = persistency_predicted

        predictions = StepPredictions(
            kind=op.kind,
            state_count=state.size,
            relevance_logits=relevance_logits,
            persistency_logits=persistency_logits,
            relevance_predicted=relevance_predicted,
            persistency_predicted=persistency_predicted,
            relevance_used=relevance_used,
            persistency_used=persistency_used,
        )

        if op.is_update:
            # overwrite writes every state, so value supervision follows the true update path
            value_mask = persistency_used if self.selective or targets is None else targets.persistency
            written = [int(j) for j in np.flatnonzero(value_mask)]
            if written:
                predictions.node_value_logits = self.decode_node_values(candidates, written)
                predictions.node_value_states = written
        else:
            try:
                predictions.answer_logits = self.readout(z, candidates, relevance_used)
            except NoRelevantStateError:
                logger.debug("empty relevance set at step %d", t)
                predictions.empty_readout = True

        keep = persistency_used.astype(float)
        if self.selective:
            state.hidden = add(scale_rows(candidates, keep), scale_rows(hidden, 1.0 - keep))
        else:
            state.hidden = candidates
        for j in np.flatnonzero(persistency_used):
            state.time_stamps[j] = t
        return predictions


class OracleMPNN(MessagePassingCore):
    """Memory-free MPNN that reads the ground-truth snapshot at every query."""

    def start(self, layout: EntityLayout) -> FixedState:
        n = layout.entity_count
        return FixedState(
            constant(np.zeros((n, self.hidden_dim))), [0] * n, _tree_connectivity(layout)
        )

    def targets_for(
        self,
        state: FixedState,
        record: StepSupervision,
        tree: VersionedTree,
        version_steps: Sequence[int],
    ) -> StepTargets:
        return entity_targets(state.size, record, tree)

    def snapshot_features(self, layout: EntityLayout, tree: VersionedTree, op: Operation) -> np.ndarray:
        """Query features with each entity's version-s value in the value channels."""
        assert op.s is not None
        features = entity_features(layout, op)
        for node_id in tree.reachable(op.s):
            node = tree.nodes[node_id]
            features[node.entity, VALUE_SLICE] = to_bits(node.value)
        return features

    def advance(
        self,
        state: FixedState,
        layout: EntityLayout,
        tree: VersionedTree,
        op: Operation,
        t: int,
        snapshot_step: int,
        mode: RolloutMode,
        targets: Optional[StepTargets] = None,
    ) -> StepPredictions:
        if targets is None:
            raise ContractViolationError("the oracle reads the ground-truth canonical cover")
        nothing = np.zeros(state.size, dtype=bool)
        predictions = StepPredictions(
            kind=op.kind,
            state_count=state.size,
            relevance_logits=None,
            persistency_logits=None,
            relevance_predicted=targets.relevance,
            persistency_predicted=nothing,
            relevance_used=targets.relevance,
            persistency_used=nothing,
        )
        if op.is_update:
            return predictions
        z = self.operation_inputs(state.hidden, self.snapshot_features(layout, tree, op))
        candidates = self.process(z, state.connectivity)
        predictions.answer_logits = self.readout(z, candidates, targets.relevance)
        return predictions


RolloutModel = Union[PersistentMessagePassing, OverwritingMPNN, OracleMPNN]


def build_model(kind: ModelKind, params: ModelParams, config: ExperimentConfig) -> RolloutModel:
    """Instantiate the model of the requested kind around ``params``."""
    if kind is ModelKind.PMP:
        return PersistentMessagePassing(params, config)
    if kind is ModelKind.OVERWRITE:
        return OverwritingMPNN(params, config, selective=False)
    if kind is ModelKind.SELECTIVE:
        return OverwritingMPNN(params, config, selective=True)
    return OracleMPNN(params, config)

