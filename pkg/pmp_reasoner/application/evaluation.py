"""
Free-rollout evaluation of trained checkpoints and cross-model comparison.
"""

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..domain.entities import (
    ComparisonRow,
    ComparisonTable,
    EvalReport,
    ModelKind,
    Rollout,
    RolloutMode,
    SeedMetrics,
    StepTrace,
)
from ..domain.errors import ConfigurationError, InvalidComparisonError, InvalidInputError
from ..infrastructure.checkpoint_store import load_checkpoint
from ..infrastructure.config_loader import resolve_worker_count
from ..infrastructure.dataset_store import dataset_digest, read_dataset
from ..infrastructure.report_store import write_trace
from ..modeling.baselines import RolloutModel, build_model
from .rollout_runner import MaskCounts, RolloutOutcome, run_rollout

logger = logging.getLogger(__name__)

ORACLE_TOLERANCE = 0.05


def run_free(
    model: RolloutModel,
    rollouts: Sequence[Rollout],
    max_workers: Optional[int] = None,
    collect_trace: bool = False,
) -> List[RolloutOutcome]:
    """Every rollout played in free mode; results keep the input order."""

    def one(item: Tuple[int, Rollout]) -> RolloutOutcome:
        index, rollout = item
        return run_rollout(model, rollout, RolloutMode.FREE, collect_trace, index)

    with ThreadPoolExecutor(max_workers=max_workers or resolve_worker_count()) as executor:
        return list(executor.map(one, enumerate(rollouts)))


def summarize(seed: int, outcomes: Sequence[RolloutOutcome]) -> SeedMetrics:
    relevance, persistency = MaskCounts(), MaskCounts()
    for outcome in outcomes:
        relevance.merge(outcome.relevance)
        persistency.merge(outcome.persistency)
    queries = sum(o.queries for o in outcomes)
    bits = sum(o.bits for o in outcomes)
    return SeedMetrics(
        seed=seed,
        query_accuracy=sum(o.correct_queries for o in outcomes) / queries if queries else 0.0,
        bit_accuracy=sum(o.correct_bits for o in outcomes) / bits if bits else 0.0,
        relevance_precision=relevance.precision,
        relevance_recall=relevance.recall,
        persistency_precision=persistency.precision,
        persistency_recall=persistency.recall,
        mean_final_nodes=(
            float(np.mean([o.final_state_count for o in outcomes])) if outcomes else 0.0
        ),
        empty_readouts=sum(o.empty_readouts for o in outcomes),
        rollouts=len(outcomes),
    )


def evaluate_rollouts(
    model: RolloutModel,
    rollouts: Sequence[Rollout],
    seed: int = 0,
    max_workers: Optional[int] = None,
) -> SeedMetrics:
    return summarize(seed, run_free(model, rollouts, max_workers))


class EvaluateModelUseCase:
    """Evaluate one checkpoint per training seed on a dataset file."""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers

    def execute(
        self,
        checkpoints: Sequence[Path],
        data: Path,
        model_kind: Optional[ModelKind] = None,
        dataset_name: Optional[str] = None,
        trace_path: Optional[Path] = None,
    ) -> EvalReport:
        if not checkpoints:
            raise InvalidInputError("evaluation needs at least one checkpoint")
        rollouts = read_dataset(data)
        report: Optional[EvalReport] = None
        traces: List[StepTrace] = []

        for path in checkpoints:
            checkpoint = load_checkpoint(path)
            kind = model_kind or checkpoint.kind
            if checkpoint.kind is not kind:
                raise ConfigurationError(
                    f"{path} holds a {checkpoint.kind.value} model, not {kind.value}"
                )
            if report is None:
                report = EvalReport(
                    model=kind,
                    dataset=dataset_name or data.stem,
                    dataset_digest=dataset_digest(data),
                )
            elif report.model is not kind:
                raise ConfigurationError("all checkpoints of one evaluation must share a model kind")

            model = build_model(kind, checkpoint.params, checkpoint.config)
            outcomes = run_free(model, rollouts, self.max_workers, collect_trace=trace_path is not None)
            metrics = summarize(checkpoint.seed, outcomes)
            report.seeds.append(metrics)
            logger.info(
                "%s seed %d on %s: query accuracy %.3f, bit accuracy %.3f, final N %.1f",
                kind.value, checkpoint.seed, report.dataset, metrics.query_accuracy,
                metrics.bit_accuracy, metrics.mean_final_nodes,
            )
            if trace_path is not None and not traces:
                traces = [trace for outcome in outcomes for trace in outcome.traces]

        assert report is not None
        if trace_path is not None:
            write_trace(traces, trace_path)
        logger.info(report.get_summary())
        return report


def compare_reports(
    reports: Sequence[EvalReport], tolerance: float = ORACLE_TOLERANCE
) -> ComparisonTable:
    """Mean ± std rows per (model, dataset) plus the expected ordering checks."""
    by_dataset: Dict[str, List[EvalReport]] = defaultdict(list)
    for report in reports:
        by_dataset[report.dataset].append(report)

    rows: List[ComparisonRow] = []
    orderings: Dict[str, bool] = {}
    for dataset in sorted(by_dataset):
        group = by_dataset[dataset]
        digests = {r.dataset_digest for r in group}
        if len(digests) > 1:
            raise InvalidComparisonError(f"reports for '{dataset}' were computed on different files")
        seed_sets = {tuple(sorted(m.seed for m in r.seeds)) for r in group}
        if len(seed_sets) > 1:
            raise InvalidComparisonError(f"reports for '{dataset}' use different seed sets")
        models = [r.model for r in group]
        if len(set(models)) != len(models):
            raise InvalidComparisonError(f"'{dataset}' has more than one report per model")

        accuracy: Dict[ModelKind, float] = {}
        for report in sorted(group, key=lambda r: list(ModelKind).index(r.model)):
            values = [m.query_accuracy for m in report.seeds]
            accuracy[report.model] = float(np.mean(values)) if values else 0.0
            rows.append(
                ComparisonRow(
                    model=report.model,
                    dataset=dataset,
                    mean=accuracy[report.model],
                    std=float(np.std(values)) if values else 0.0,
                    seeds=len(values),
                )
            )

        pmp = accuracy.get(ModelKind.PMP)
        selective = accuracy.get(ModelKind.SELECTIVE)
        overwrite = accuracy.get(ModelKind.OVERWRITE)
        oracle = accuracy.get(ModelKind.ORACLE)
        if pmp is not None and selective is not None and overwrite is not None:
            orderings[f"{dataset}: pmp >= selective >= overwrite"] = pmp >= selective >= overwrite
        if pmp is not None and oracle is not None:
            orderings[f"{dataset}: pmp within {tolerance:.2f} of oracle"] = oracle - pmp <= tolerance

    return ComparisonTable(rows=rows, orderings=orderings)
