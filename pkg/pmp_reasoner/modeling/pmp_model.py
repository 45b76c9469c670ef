"""
Persistent Message Passing.

Instead of overwriting node latents, every step selects relevant states,
predicts which of them to persist and appends updated copies to an
append-only hidden-state store. Two sparse adjacency structures evolve with
the store: connectivity (Π), mirroring the segment tree's child links, and
relevance (Λ), linking every copy to the state it was copied from.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..domain.entities import (
    ExperimentConfig,
    Operation,
    OperationKind,
    RelevanceContext,
    RolloutMode,
    StepSupervision,
)
from ..domain.errors import ContractViolationError, NoRelevantStateError
from ..domain.features import EntityLayout, encode_operation, from_bits
from ..domain.segment_tree import VersionedTree
from .diff_core import (
    SparseAdjacency,
    Tensor,
    concat_cols,
    concat_rows,
    constant,
    gather_rows,
    masked_neighbor_max,
    reduce_max_rows,
    relu,
    scale_rows,
)
from .params import ModelParams
from .supervision import StepTargets, state_targets

logger = logging.getLogger(__name__)


class HiddenStateStore:
    """The growing set of hidden vectors with time stamps and lineage."""

    def __init__(self, hidden_dim: int):
        self.hidden_dim = hidden_dim
        self.blocks: List[Tensor] = []
        self.time_stamps: List[int] = []
        self.entities: List[int] = []
        self.parent_versions: List[Optional[int]] = []
        self._matrix: Optional[Tensor] = None

    @classmethod
    def initial(cls, entity_count: int, hidden_dim: int) -> "HiddenStateStore":
        """N = n zero states, one per entity, all stamped 0."""
        store = cls(hidden_dim)
        store.blocks.append(constant(np.zeros((entity_count, hidden_dim))))
        store.time_stamps = [0] * entity_count
        store.entities = list(range(entity_count))
        store.parent_versions = [None] * entity_count
        return store

    @property
    def size(self) -> int:
        return len(self.entities)

    def matrix(self) -> Tensor:
        if self._matrix is None:
            self._matrix = self.blocks[0] if len(self.blocks) == 1 else concat_rows(self.blocks)
        return self._matrix

    def append(self, rows: Tensor, step: int, predecessors: Sequence[int]) -> List[int]:
        if rows.shape != (len(predecessors), self.hidden_dim):
            raise ContractViolationError(
                f"appending rows {rows.shape} for {len(predecessors)} predecessors"
            )
        first = self.size
        self.blocks.append(rows)
        for j in predecessors:
            self.time_stamps.append(step)
            self.entities.append(self.entities[j])
            self.parent_versions.append(j)
        self._matrix = None
        return list(range(first, self.size))

    def current_states(self, step: int) -> Dict[int, int]:
        """Entity -> newest state created no later than ``step``."""
        current: Dict[int, int] = {}
        for j, (entity, stamp) in enumerate(zip(self.entities, self.time_stamps)):
            if stamp <= step:
                current[entity] = j
        return current


class AdjacencyPair:
    """Connectivity Π (symmetric child links + self-loops) and relevance Λ."""

    def __init__(self) -> None:
        self.children: List[Tuple[int, ...]] = []
        self.connectivity_rows: List[Set[int]] = []
        self.relevance_rows: List[Set[int]] = []

    @classmethod
    def from_layout(cls, layout: EntityLayout) -> "AdjacencyPair":
        pair = cls()
        n = layout.entity_count
        kids: List[List[int]] = [[] for _ in range(n)]
        for parent, child in layout.tree_edges():
            kids[parent].append(child)
        for j in range(n):
            pair.children.append(tuple(sorted(kids[j])))
            pair.connectivity_rows.append({j})
            pair.relevance_rows.append({j})
        for parent, child in layout.tree_edges():
            pair.connectivity_rows[parent].add(child)
            pair.connectivity_rows[child].add(parent)
        return pair

    @property
    def size(self) -> int:
        return len(self.children)

    def connectivity(self) -> SparseAdjacency:
        return SparseAdjacency.from_neighbor_sets(self.connectivity_rows)

    def relevance(self, bidirectional: bool = True) -> SparseAdjacency:
        if not bidirectional:
            return SparseAdjacency.from_neighbor_sets(self.relevance_rows)
        rows = [set(row) for row in self.relevance_rows]
        for j, row in enumerate(self.relevance_rows):
            for other in row:
                rows[other].add(j)
        return SparseAdjacency.from_neighbor_sets(rows)

    def predecessor(self, j: int) -> Optional[int]:
        others = self.relevance_rows[j] - {j}
        return next(iter(others)) if others else None

    def append_copies(self, persisted: Sequence[int]) -> List[int]:
        """Copy rows of ``persisted``; links to simultaneously copied states follow the copies."""
        base = self.size
        mapping = {j: base + i for i, j in enumerate(persisted)}
        for j in persisted:
            self.children.append(tuple(mapping.get(c, c) for c in self.children[j]))
            self.connectivity_rows.append({mapping[j]})
            self.relevance_rows.append({mapping[j], j})
        for j in persisted:
            new = mapping[j]
            for child in self.children[new]:
                self.connectivity_rows[new].add(child)
                self.connectivity_rows[child].add(new)
        return [mapping[j] for j in persisted]


@dataclass
class StepPredictions:
    """Everything one step produced: logits for losses and the masks that were used."""

    kind: OperationKind
    state_count: int
    relevance_logits: Optional[Tensor]
    persistency_logits: Optional[Tensor]
    relevance_predicted: np.ndarray
    persistency_predicted: np.ndarray
    relevance_used: np.ndarray
    persistency_used: np.ndarray
    answer_logits: Optional[Tensor] = None
    node_value_logits: Optional[Tensor] = None
    node_value_states: List[int] = field(default_factory=list)
    new_states: List[int] = field(default_factory=list)
    empty_readout: bool = False

    @property
    def predicted_answer_bits(self) -> Optional[List[int]]:
        if self.answer_logits is None:
            return None
        return [int(v > 0) for v in self.answer_logits.data.reshape(-1)]

    @property
    def predicted_answer(self) -> Optional[int]:
        bits = self.predicted_answer_bits
        return None if bits is None else from_bits(bits)


class MessagePassingCore:
    """Encoders, processor, mask heads and decoders shared by every model kind."""

    def __init__(self, params: ModelParams, config: ExperimentConfig):
        self.params = params
        self.config = config

    @property
    def hidden_dim(self) -> int:
        return self.params.hidden_dim

    def time_scalars(self, time_stamps: Sequence[int], t: int, snapshot_step: int) -> np.ndarray:
        """[time_stamp/T, t/T, s/T, 1[time_stamp <= s]] per state."""
        horizon = float(self.config.time_horizon)
        stamps = np.asarray(time_stamps, dtype=float)
        scalars = np.empty((stamps.shape[0], 4))
        scalars[:, 0] = stamps / horizon
        scalars[:, 1] = t / horizon
        scalars[:, 2] = snapshot_step / horizon
        scalars[:, 3] = stamps <= snapshot_step
        return scalars

    def operation_inputs(self, hidden: Tensor, features: np.ndarray) -> Tensor:
        return self.params["f_operation"](concat_cols([constant(features), hidden]))

    def relevance_inputs(self, latent: Tensor, scalars: np.ndarray) -> Tensor:
        return self.params["f_relevance"](concat_cols([constant(scalars), latent]))

    def encode(
        self,
        hidden: Tensor,
        time_stamps: Sequence[int],
        features: np.ndarray,
        connectivity: SparseAdjacency,
        t: int,
        snapshot_step: int,
    ) -> Tuple[Tensor, Tensor, Tensor]:
        """(V, Z, candidates) for every state.

        The relevance encoder sees the candidates by default: initial hidden
        states are all zero, so only the processed latents carry the query
        bounds and tree position a state needs to judge its own relevance.
        """
        z = self.operation_inputs(hidden, features)
        candidates = self.process(z, connectivity)
        latent = candidates if self.config.relevance_context is RelevanceContext.CANDIDATE else hidden
        v = self.relevance_inputs(latent, self.time_scalars(time_stamps, t, snapshot_step))
        return v, z, candidates

    def process(self, inputs: Tensor, adjacency: SparseAdjacency, relevance_pass: bool = False) -> Tensor:
        """``processor_steps`` rounds of x <- U(x, max_j' M(x_j', x_j))."""
        separate = relevance_pass and not self.config.shared_processor and "relevance_message" in self.params
        message = self.params["relevance_message" if separate else "message"]
        update = self.params["relevance_update" if separate else "update"]
        x = inputs
        for _ in range(self.config.processor_steps):
            aggregated = masked_neighbor_max(x, adjacency, message)
            x = relu(update(concat_cols([x, aggregated])))
        return x

    def relevance_logits(self, relevance_latents: Tensor) -> Tensor:
        return self.params["psi_relevance"](relevance_latents)

    def persistency_logits(self, candidates: Tensor, relevance: np.ndarray) -> Tensor:
        return self.params["psi_persistency"](scale_rows(candidates, relevance))

    def readout(self, z: Tensor, candidates: Tensor, relevance: np.ndarray) -> Tensor:
        """g(max over relevant z ; max over relevant h-hat) -> 4 answer logits."""
        rows = np.flatnonzero(relevance)
        if rows.size == 0:
            raise NoRelevantStateError("no state is relevant to this query")
        pooled_z = reduce_max_rows(gather_rows(z, rows))
        pooled_h = reduce_max_rows(gather_rows(candidates, rows))
        return self.params["readout"](concat_cols([pooled_z, pooled_h]))

    def decode_node_values(self, candidates: Tensor, persisted: Sequence[int]) -> Tensor:
        """4 value logits per persisted state."""
        return self.params["node_value"](gather_rows(candidates, list(persisted)))


def threshold(logits: Tensor) -> np.ndarray:
    """sigmoid(logit) > 0.5, i.e. a strictly positive logit."""
    return logits.data.reshape(-1) > 0


class PersistentMessagePassing(MessagePassingCore):
    """PMP over a segment-tree entity layout."""

    def start(self, layout: EntityLayout) -> "PMPState":
        return PMPState(
            HiddenStateStore.initial(layout.entity_count, self.hidden_dim),
            AdjacencyPair.from_layout(layout),
        )

    def targets_for(
        self,
        state: "PMPState",
        record: StepSupervision,
        tree: VersionedTree,
        version_steps: Sequence[int],
    ) -> StepTargets:
        return state_targets(
            state.store.entities, state.store.time_stamps, record, tree, version_steps
        )

    def advance(
        self,
        state: "PMPState",
        layout: EntityLayout,
        tree: VersionedTree,
        op: Operation,
        t: int,
        snapshot_step: int,
        mode: RolloutMode,
        targets: Optional[StepTargets] = None,
    ) -> StepPredictions:
        _, _, predictions = self.step(
            state.store, state.adjacency, layout, op, t, snapshot_step, mode, targets
        )
        return predictions

    def persist(
        self,
        store: HiddenStateStore,
        adjacency: AdjacencyPair,
        candidates: Tensor,
        persistency: np.ndarray,
        t: int,
    ) -> List[int]:
        """Append copies of every state with φ = 1 (ascending id); returns the new ids."""
        selected = [int(j) for j in np.flatnonzero(persistency)]
        if not selected:
            return []
        entities = [store.entities[j] for j in selected]
        if len(set(entities)) != len(entities):
            raise ContractViolationError(f"an entity is persisted twice at step {t}")
        new_ids = adjacency.append_copies(selected)
        store.append(gather_rows(candidates, selected), t, selected)
        return new_ids

    def step(
        self,
        store: HiddenStateStore,
        adjacency: AdjacencyPair,
        layout: EntityLayout,
        op: Operation,
        t: int,
        snapshot_step: int,
        mode: RolloutMode,
        targets: Optional[StepTargets] = None,
        features: Optional[np.ndarray] = None,
    ) -> Tuple[HiddenStateStore, AdjacencyPair, StepPredictions]:
        """encode -> process -> relevance -> readout/decode -> persistency -> persist."""
        if mode is RolloutMode.TEACHER_FORCED and targets is None:
            raise ContractViolationError("teacher forcing needs ground-truth targets")
        if features is None:
            features = encode_operation(layout, op, store.entities, store.time_stamps).features

        state_count = store.size
        v, z, candidates = self.encode(
            store.matrix(), store.time_stamps, features, adjacency.connectivity(), t, snapshot_step
        )
        relevance_latents = self.process(
            v, adjacency.relevance(self.config.bidirectional_relevance), relevance_pass=True
        )

        relevance_logits = self.relevance_logits(relevance_latents)
        relevance_predicted = threshold(relevance_logits)
        teacher = mode is RolloutMode.TEACHER_FORCED
        relevance_used = targets.relevance if teacher and targets is not None else relevance_predicted

        persistency_logits = self.persistency_logits(candidates, relevance_used)
        persistency_predicted = threshold(persistency_logits) & relevance_used
        if teacher and targets is not None:
            persistency_used = targets.persistency
        else:
            persistency_used = _one_copy_per_entity(
                persistency_predicted, persistency_logits, store.entities
            )

        predictions = StepPredictions(
            kind=op.kind,
            state_count=state_count,
            relevance_logits=relevance_logits,
            persistency_logits=persistency_logits,
            relevance_predicted=relevance_predicted,
            persistency_predicted=persistency_predicted,
            relevance_used=relevance_used,
            persistency_used=persistency_used,
        )

        if op.is_update:
            persisted = [int(j) for j in np.flatnonzero(persistency_used)]
            if persisted:
                predictions.node_value_logits = self.decode_node_values(candidates, persisted)
                predictions.node_value_states = persisted
        else:
            try:
                predictions.answer_logits = self.readout(z, candidates, relevance_used)
            except NoRelevantStateError:
                logger.debug("empty relevance set at step %d", t)
                predictions.empty_readout = True

        predictions.new_states = self.persist(store, adjacency, candidates, persistency_used, t)
        return store, adjacency, predictions


def _one_copy_per_entity(
    selected: np.ndarray, logits: Tensor, entities: Sequence[int]
) -> np.ndarray:
    """Keep, per entity, only the selected state with the largest persistency logit."""
    scores = logits.data.reshape(-1)
    best: Dict[int, int] = {}
    for j in np.flatnonzero(selected):
        entity = entities[j]
        if entity not in best or scores[j] > scores[best[entity]]:
            best[entity] = int(j)
    kept = np.zeros_like(selected)
    kept[list(best.values())] = True
    if kept.sum() != selected.sum():
        logger.debug("dropped %d duplicate persistence selections", int(selected.sum() - kept.sum()))
    return kept


@dataclass
class PMPState:
    """Rollout state of a PMP model: the store and both adjacency structures."""

    store: HiddenStateStore
    adjacency: AdjacencyPair

    @property
    def size(self) -> int:
        return self.store.size

    def entity_of(self, j: int) -> int:
        return self.store.entities[j]
