"""
Metrics CSV, evaluation report records and rollout traces.
"""

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ValidationError

from ..domain.entities import SCHEMA_VERSION, EvalReport, LossBreakdown, StepTrace
from ..domain.errors import DatasetParseError, SchemaVersionError

METRICS_COLUMNS = [
    "seed",
    "iteration",
    "answer_bce",
    "relevance_bce",
    "persistency_bce",
    "node_value_bce",
    "total",
    "eval_query_accuracy",
    "eval_ood_query_accuracy",
]


class MetricsLog:
    """Append-only CSV of training metrics."""

    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            csv.writer(f).writerow(METRICS_COLUMNS)

    def record(
        self,
        seed: int,
        iteration: int,
        losses: LossBreakdown,
        eval_query_accuracy: Optional[float] = None,
        eval_ood_query_accuracy: Optional[float] = None,
    ) -> None:
        row = [
            seed,
            iteration,
            repr(losses.answer_bce),
            repr(losses.relevance_bce),
            repr(losses.persistency_bce),
            repr(losses.node_value_bce),
            repr(losses.total),
            "" if eval_query_accuracy is None else repr(eval_query_accuracy),
            "" if eval_ood_query_accuracy is None else repr(eval_ood_query_accuracy),
        ]
        with open(self.path, "a", encoding="utf-8", newline="") as f:
            csv.writer(f).writerow(row)


def read_metrics(path: Path) -> List[Dict[str, str]]:
    """Rows of a metrics CSV as column -> raw string."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _write_records(records: Iterable[BaseModel], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(record.model_dump_json())
            f.write("\n")
    return path


def write_reports(reports: Iterable[EvalReport], path: Path) -> Path:
    return _write_records(reports, path)


def read_reports(path: Path) -> List[EvalReport]:
    if not path.exists():
        raise FileNotFoundError(f"Report not found: {path}")
    reports = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetParseError(line_number, f"invalid JSON: {e.msg}")
            if raw.get("schema_version") != SCHEMA_VERSION:
                raise SchemaVersionError(
                    f"{path}:{line_number}: schema_version {raw.get('schema_version')!r}, "
                    f"expected {SCHEMA_VERSION}"
                )
            try:
                reports.append(EvalReport.model_validate(raw))
            except ValidationError as e:
                raise DatasetParseError(line_number, str(e))
    return reports


def write_trace(traces: Iterable[StepTrace], path: Path) -> Path:
    return _write_records(traces, path)
