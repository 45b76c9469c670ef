"""
Drive any model through one rollout, collecting differentiable losses,
free-mode metrics and optional per-step traces.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from ..domain.entities import LossBreakdown, Rollout, RolloutMode, StepTrace
from ..domain.features import EntityLayout, to_bits
from ..modeling.baselines import FixedState, RolloutModel
from ..modeling.diff_core import Tensor, bce_with_logits, concat_rows, constant, gather_rows, sum_scalars
from ..modeling.pmp_model import PMPState, StepPredictions
from ..modeling.supervision import StepTargets

logger = logging.getLogger(__name__)


@dataclass
class MaskCounts:
    """Confusion counts of a predicted boolean mask against the truth."""

    true_positive: int = 0
    false_positive: int = 0
    false_negative: int = 0

    def add(self, predicted: np.ndarray, truth: np.ndarray) -> None:
        predicted = np.asarray(predicted, dtype=bool)
        truth = np.asarray(truth, dtype=bool)
        self.true_positive += int(np.sum(predicted & truth))
        self.false_positive += int(np.sum(predicted & ~truth))
        self.false_negative += int(np.sum(~predicted & truth))

    def merge(self, other: "MaskCounts") -> None:
        self.true_positive += other.true_positive
        self.false_positive += other.false_positive
        self.false_negative += other.false_negative

    @property
    def precision(self) -> float:
        predicted = self.true_positive + self.false_positive
        return self.true_positive / predicted if predicted else 1.0

    @property
    def recall(self) -> float:
        actual = self.true_positive + self.false_negative
        return self.true_positive / actual if actual else 1.0


class _LossTerm:
    """Logit blocks and their targets, reduced to one mean BCE over every item."""

    def __init__(self) -> None:
        self.logits: List[Tensor] = []
        self.targets: List[np.ndarray] = []

    def add(self, logits: Tensor, targets: np.ndarray) -> None:
        if logits.shape[0] == 0:
            return
        self.logits.append(logits)
        self.targets.append(np.asarray(targets, dtype=float).reshape(logits.shape))

    def loss(self) -> Tensor:
        if not self.logits:
            return constant(np.zeros((1, 1)))
        return bce_with_logits(concat_rows(self.logits), np.concatenate(self.targets, axis=0))


@dataclass
class RolloutOutcome:
    """Losses (as tensors), counters and traces of one rollout."""

    answer_loss: Tensor
    relevance_loss: Tensor
    persistency_loss: Tensor
    node_value_loss: Tensor
    queries: int = 0
    correct_queries: int = 0
    bits: int = 0
    correct_bits: int = 0
    empty_readouts: int = 0
    relevance: MaskCounts = field(default_factory=MaskCounts)
    persistency: MaskCounts = field(default_factory=MaskCounts)
    state_counts: List[int] = field(default_factory=list)
    traces: List[StepTrace] = field(default_factory=list)

    @property
    def total(self) -> Tensor:
        return sum_scalars(
            [self.answer_loss, self.relevance_loss, self.persistency_loss, self.node_value_loss]
        )

    @property
    def final_state_count(self) -> int:
        return self.state_counts[-1] if self.state_counts else 0

    def breakdown(self) -> LossBreakdown:
        return LossBreakdown(
            answer_bce=self.answer_loss.item(),
            relevance_bce=self.relevance_loss.item(),
            persistency_bce=self.persistency_loss.item(),
            node_value_bce=self.node_value_loss.item(),
        )


def _value_targets(
    predictions: StepPredictions, targets: StepTargets, state: Union[PMPState, FixedState]
) -> Tuple[List[int], List[List[int]]]:
    """Rows of the node-value logits that have a ground-truth value, and their bits."""
    rows: List[int] = []
    bits: List[List[int]] = []
    for row, j in enumerate(predictions.node_value_states):
        value = targets.node_values.get(state.entity_of(j))
        if value is not None:
            rows.append(row)
            bits.append(to_bits(value))
    return rows, bits


def _trace(index: int, t: int, predictions: StepPredictions, targets: StepTargets) -> StepTrace:
    def ids(mask: np.ndarray) -> List[int]:
        return [int(j) for j in np.flatnonzero(mask)]

    return StepTrace(
        rollout=index,
        step=t,
        kind=predictions.kind,
        state_count=predictions.state_count,
        relevance_predicted=ids(predictions.relevance_predicted),
        relevance_true=ids(targets.relevance),
        persistency_predicted=ids(predictions.persistency_used),
        persistency_true=ids(targets.persistency),
        answer_predicted=predictions.predicted_answer,
        answer_true=targets.answer,
    )


def run_rollout(
    model: RolloutModel,
    rollout: Rollout,
    mode: RolloutMode,
    collect_trace: bool = False,
    index: int = 0,
) -> RolloutOutcome:
    """Play ``rollout`` through ``model`` step by step.

    Update steps see the latest version as their snapshot; query steps see
    the step that created version ``s``.
    """
    tree = rollout.replay_tree()
    layout = EntityLayout.from_tree(tree)
    version_steps = rollout.version_steps()
    state = model.start(layout)

    answer, relevance, persistency, node_value = _LossTerm(), _LossTerm(), _LossTerm(), _LossTerm()
    outcome = RolloutOutcome(
        answer_loss=constant(np.zeros((1, 1))),
        relevance_loss=constant(np.zeros((1, 1))),
        persistency_loss=constant(np.zeros((1, 1))),
        node_value_loss=constant(np.zeros((1, 1))),
    )
    versions_so_far = 0

    for t, (op, record) in enumerate(zip(rollout.ops, rollout.supervision), start=1):
        targets = model.targets_for(state, record, tree, version_steps)
        if op.is_update:
            snapshot_step = version_steps[versions_so_far]
        else:
            assert op.s is not None
            snapshot_step = version_steps[op.s]

        predictions = model.advance(state, layout, tree, op, t, snapshot_step, mode, targets)

        if predictions.relevance_logits is not None:
            relevance.add(predictions.relevance_logits, targets.relevance)
        if predictions.persistency_logits is not None:
            rows = targets.relevant_states
            if rows:
                persistency.add(
                    gather_rows(predictions.persistency_logits, rows), targets.persistency[rows]
                )
        if predictions.node_value_logits is not None:
            rows, bits = _value_targets(predictions, targets, state)
            if rows:
                node_value.add(gather_rows(predictions.node_value_logits, rows), np.array(bits))

        outcome.relevance.add(predictions.relevance_predicted, targets.relevance)
        outcome.persistency.add(predictions.persistency_used, targets.persistency)

        if not op.is_update and targets.answer is not None:
            truth = to_bits(targets.answer)
            outcome.queries += 1
            outcome.bits += len(truth)
            if predictions.empty_readout:
                outcome.empty_readouts += 1
            else:
                assert predictions.answer_logits is not None
                answer.add(predictions.answer_logits, np.array([truth]))
                predicted = predictions.predicted_answer_bits or []
                matches = sum(int(p == q) for p, q in zip(predicted, truth))
                outcome.correct_bits += matches
                outcome.correct_queries += int(matches == len(truth))

        if collect_trace:
            outcome.traces.append(_trace(index, t, predictions, targets))
        versions_so_far += int(op.is_update)
        outcome.state_counts.append(state.size)

    outcome.answer_loss = answer.loss()
    outcome.relevance_loss = relevance.loss()
    outcome.persistency_loss = persistency.loss()
    outcome.node_value_loss = node_value.loss()
    logger.debug(
        "rollout %d (%s): %d/%d queries correct, %d states",
        index, mode.value, outcome.correct_queries, outcome.queries,
        outcome.final_state_count,
    )
    return outcome


def mean_breakdown(breakdowns: List[LossBreakdown]) -> LossBreakdown:
    count = max(len(breakdowns), 1)
    return LossBreakdown(
        answer_bce=sum(b.answer_bce for b in breakdowns) / count,
        relevance_bce=sum(b.relevance_bce for b in breakdowns) / count,
        persistency_bce=sum(b.persistency_bce for b in breakdowns) / count,
        node_value_bce=sum(b.node_value_bce for b in breakdowns) / count,
    )

