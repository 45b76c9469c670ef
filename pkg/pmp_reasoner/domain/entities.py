"""
Domain records: operations, rollouts with their supervision, experiment
configuration and evaluation reports.
"""

from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .segment_tree import VALUE_MAX, VALUE_MIN, VersionedTree

SCHEMA_VERSION = 1


class OperationKind(str, Enum):
    UPDATE = "update"
    QUERY = "query"


class RolloutMode(str, Enum):
    TEACHER_FORCED = "teacher_forced"
    FREE = "free"


class ModelKind(str, Enum):
    PMP = "pmp"
    OVERWRITE = "overwrite"
    SELECTIVE = "selective"
    ORACLE = "oracle"


class RelevanceContext(str, Enum):
    """Which per-state latent the relevance encoder sees next to the time scalars.

    CANDIDATE is the default: initial hidden states are all zero and carry no
    query bounds, so HIDDEN leaves the relevance encoder blind at step one.
    """

    HIDDEN = "hidden"
    CANDIDATE = "candidate"


class Operation(BaseModel):
    """A single update (k, x) or historical query (a, b, s)."""

    kind: OperationKind
    k: Optional[int] = None
    x: Optional[int] = None
    a: Optional[int] = None
    b: Optional[int] = None
    s: Optional[int] = None

    @model_validator(mode="after")
    def _check_fields(self) -> "Operation":
        if self.kind is OperationKind.UPDATE:
            if self.k is None or self.x is None:
                raise ValueError("update needs k and x")
            if not VALUE_MIN <= self.x <= VALUE_MAX:
                raise ValueError(f"update value {self.x} outside [{VALUE_MIN}, {VALUE_MAX}]")
        else:
            if self.a is None or self.b is None or self.s is None:
                raise ValueError("query needs a, b and s")
            if not 0 <= self.a <= self.b:
                raise ValueError(f"invalid query range [{self.a}, {self.b}]")
            if self.s < 0:
                raise ValueError(f"negative snapshot {self.s}")
        return self

    @classmethod
    def update(cls, k: int, x: int) -> "Operation":
        return cls(kind=OperationKind.UPDATE, k=k, x=x)

    @classmethod
    def query(cls, a: int, b: int, s: int) -> "Operation":
        return cls(kind=OperationKind.QUERY, a=a, b=b, s=s)

    @property
    def is_update(self) -> bool:
        return self.kind is OperationKind.UPDATE


class StepSupervision(BaseModel):
    """Ground truth for one rollout step."""

    kind: OperationKind
    relevance_mask: List[int] = Field(default_factory=list, description="Oracle node ids")
    persist_mask: List[int] = Field(default_factory=list, description="Entity ids")
    per_node_values: List[int] = Field(default_factory=list)
    answer: Optional[int] = None
    node_count: int


class Rollout(BaseModel):
    """One episode: initial array, U updates then Q queries, and supervision."""

    schema_version: int = SCHEMA_VERSION
    size: int
    initial_array: List[int]
    ops: List[Operation]
    supervision: List[StepSupervision]

    @model_validator(mode="after")
    def _check_consistency(self) -> "Rollout":
        if self.size < 1:
            raise ValueError("size must be at least 1")
        if len(self.initial_array) != self.size:
            raise ValueError("initial_array length does not match size")
        if any(not VALUE_MIN <= v <= VALUE_MAX for v in self.initial_array):
            raise ValueError(f"initial_array values must lie in [{VALUE_MIN}, {VALUE_MAX}]")
        if len(self.ops) != len(self.supervision):
            raise ValueError("every operation needs one supervision record")

        versions = 0
        for t, (op, record) in enumerate(zip(self.ops, self.supervision), start=1):
            if record.kind is not op.kind:
                raise ValueError(
                    f"step {t}: {op.kind.value} operation with {record.kind.value} supervision"
                )
            if op.is_update:
                assert op.k is not None
                if not 0 <= op.k < self.size:
                    raise ValueError(f"step {t}: update index {op.k} outside [0, {self.size})")
                versions += 1
                continue
            assert op.b is not None and op.s is not None
            if op.b >= self.size:
                raise ValueError(f"step {t}: query bound {op.b} outside [0, {self.size})")
            if op.s > versions:
                raise ValueError(
                    f"step {t}: snapshot {op.s} does not exist yet ({versions} update(s) so far)"
                )
        return self

    @property
    def update_count(self) -> int:
        return sum(1 for op in self.ops if op.is_update)

    @property
    def query_count(self) -> int:
        return len(self.ops) - self.update_count

    def replay_tree(self) -> VersionedTree:
        """Rebuild the oracle tree with every update of the rollout applied."""
        tree = VersionedTree.build(self.initial_array)
        for op in self.ops:
            if op.is_update:
                assert op.k is not None and op.x is not None
                tree.update(op.k, op.x)
        return tree

    def version_steps(self) -> List[int]:
        """Step (1-based) at which each version was created; version 0 is step 0."""
        steps = [0]
        for t, op in enumerate(self.ops, start=1):
            if op.is_update:
                steps.append(t)
        return steps


class ExperimentConfig(BaseModel):
    """Every hyperparameter of a training/evaluation run."""

    seed: int = 0
    k: int = Field(default=5, ge=1)
    updates: int = Field(default=5, ge=0)
    queries: int = Field(default=5, ge=0)
    train_rollouts: int = Field(default=1000, ge=1)
    eval_rollouts: int = Field(default=200, ge=1)
    eval_k: int = Field(default=10, ge=1)
    eval_updates: int = Field(default=10, ge=0)
    eval_queries: int = Field(default=5, ge=0)

    model: ModelKind = ModelKind.PMP
    iterations: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    hidden_dim: int = Field(default=64, ge=1)
    processor_steps: int = Field(default=10, ge=1)
    time_horizon: int = Field(default=10, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])

    log_every: int = Field(default=100, ge=1)
    eval_every: int = Field(default=500, ge=0)
    checkpoint_every: int = Field(default=1000, ge=0)

    shared_processor: bool = True
    relevance_context: RelevanceContext = RelevanceContext.CANDIDATE
    bidirectional_relevance: bool = True


class LossBreakdown(BaseModel):
    """Scalar values of the four supervised losses."""

    answer_bce: float = 0.0
    relevance_bce: float = 0.0
    persistency_bce: float = 0.0
    node_value_bce: float = 0.0

    @property
    def total(self) -> float:
        return self.answer_bce + self.relevance_bce + self.persistency_bce + self.node_value_bce


class SeedMetrics(BaseModel):
    """Free-mode metrics of one trained parameter set on one dataset."""

    seed: int
    query_accuracy: float
    bit_accuracy: float
    relevance_precision: float
    relevance_recall: float
    persistency_precision: float
    persistency_recall: float
    mean_final_nodes: float
    empty_readouts: int = 0
    rollouts: int


class EvalReport(BaseModel):
    """Metrics of one model on one dataset, broken down by training seed."""

    schema_version: int = SCHEMA_VERSION
    model: ModelKind
    dataset: str
    dataset_digest: str
    mode: RolloutMode = RolloutMode.FREE
    seeds: List[SeedMetrics] = Field(default_factory=list)

    @property
    def query_accuracy_mean(self) -> float:
        return float(np.mean([m.query_accuracy for m in self.seeds])) if self.seeds else 0.0

    @property
    def query_accuracy_std(self) -> float:
        return float(np.std([m.query_accuracy for m in self.seeds])) if self.seeds else 0.0

    def get_summary(self) -> str:
        return (
            f"{self.model.value} on {self.dataset}: "
            f"{self.query_accuracy_mean:.3f} ± {self.query_accuracy_std:.3f} "
            f"over {len(self.seeds)} seed(s)"
        )


class ComparisonRow(BaseModel):
    model: ModelKind
    dataset: str
    mean: float
    std: float
    seeds: int


class ComparisonTable(BaseModel):
    """Comparison rows plus the ordering checks that were evaluated."""

    rows: List[ComparisonRow]
    orderings: Dict[str, bool] = Field(default_factory=dict)


class StepTrace(BaseModel):
    """Debug record of one free-mode step: masks and answers, predicted vs true."""

    rollout: int
    step: int
    kind: OperationKind
    state_count: int
    relevance_predicted: List[int]
    relevance_true: List[int]
    persistency_predicted: List[int]
    persistency_true: List[int]
    answer_predicted: Optional[int] = None
    answer_true: Optional[int] = None
