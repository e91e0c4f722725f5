"""Accuracy, confusion matrices, and per-class rates over the test split."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Optional

import numpy as np

from . import kernels
from .errors import EvaluationError, ValidationError
from .features import FeatureStore
from .learner.head import ClassifierHead
from .learner.train import predict_store
from .taxonomy import CLASS_ORDER, NUM_CLASSES

CLASS_NAMES = tuple(c.value for c in CLASS_ORDER)


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray  # (4, 4) int64

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValidationError(
                f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}"
            )
        if np.any(self.counts < 0):
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> tuple[np.ndarray, list[int]]:
        """Row-stochastic matrix and the indices of empty (all-zero) rows."""
        sums = self.counts.sum(axis=1, keepdims=True)
        empty = [i for i in range(NUM_CLASSES) if sums[i, 0] == 0]
        safe = np.where(sums == 0, 1, sums)
        normalized = self.counts / safe
        normalized[[i for i in empty], :] = 0.0
        return normalized, empty

    def accuracy(self) -> Optional[float]:
        total = self.total
        if total == 0:
            return None
        return float(np.trace(self.counts) / total)


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    """Count matrix from parallel label arrays; labels must lie in [0, 4)."""
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValidationError("true/predicted label arrays differ in length")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
            raise ValidationError(f"{name} labels must lie in [0, {NUM_CLASSES})")
    return ConfusionMatrix(kernels.confusion_counts(y_true, y_pred, NUM_CLASSES))


@dataclass
class EvalReport:
    matrix: ConfusionMatrix
    test_size: int
    eval_seconds: float
    class_names: tuple[str, ...] = CLASS_NAMES
    per_class_precision: list[Optional[float]] = field(default_factory=list)
    per_class_recall: list[Optional[float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.per_class_precision:
            counts = self.matrix.counts
            col = counts.sum(axis=0)
            row = counts.sum(axis=1)
            diag = np.diag(counts)
            self.per_class_precision = [
                float(diag[i] / col[i]) if col[i] else None for i in range(NUM_CLASSES)
            ]
            self.per_class_recall = [
                float(diag[i] / row[i]) if row[i] else None for i in range(NUM_CLASSES)
            ]

    @property
    def accuracy(self) -> Optional[float]:
        return self.matrix.accuracy()

    @property
    def empty(self) -> bool:
        return self.test_size == 0


def report_from_pairs(y_true, y_pred, eval_seconds: float = 0.0) -> EvalReport:
    matrix = confusion_matrix(y_true, y_pred)
    return EvalReport(matrix, test_size=matrix.total, eval_seconds=eval_seconds)


def evaluate(head: ClassifierHead, store: FeatureStore, test_hashes) -> EvalReport:
    """Predict every test entry and assemble the report.

    Raises EvaluationError listing missing hashes when the store does not
    cover the test split.
    """
    started = time.perf_counter()
    try:
        _, y_true, y_pred, _ = predict_store(head, store, test_hashes)
    except Exception as exc:
        raise EvaluationError(str(exc)) from exc
    return report_from_pairs(y_true, y_pred, time.perf_counter() - started)


def _round2(value: float) -> str:
    """Two decimals, half-even, so rendered grids are bit-stable."""
    return str(
        Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)
    )


def render_report(report: EvalReport, fmt: str = "text") -> str:
    if fmt == "json":
        return _render_json(report)
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "text":
        return _render_text(report)
    raise ValidationError(f"unknown report format {fmt!r}; use text, csv or json")


def _render_json(report: EvalReport) -> str:
    normalized, empty_rows = report.matrix.normalized()
    payload = {
        "test_size": report.test_size,
        "accuracy": report.accuracy,
        "eval_seconds": report.eval_seconds,
        "class_names": list(report.class_names),
        "counts": report.matrix.counts.tolist(),
        "normalized": [[float(x) for x in row] for row in normalized],
        "empty_rows": empty_rows,
        "per_class_precision": report.per_class_precision,
        "per_class_recall": report.per_class_recall,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def parse_report_json(text: str) -> EvalReport:
    data = json.loads(text)
    matrix = ConfusionMatrix(np.array(data["counts"], dtype=np.int64))
    return EvalReport(
        matrix,
        test_size=data["test_size"],
        eval_seconds=data["eval_seconds"],
        class_names=tuple(data["class_names"]),
        per_class_precision=data["per_class_precision"],
        per_class_recall=data["per_class_recall"],
    )


def _render_csv(report: EvalReport) -> str:
    lines = ["metric,value"]
    lines.append(f"test_size,{report.test_size}")
    lines.append(f"accuracy,{'' if report.accuracy is None else repr(report.accuracy)}")
    lines.append(f"eval_seconds,{report.eval_seconds!r}")
    lines.append("")
    lines.append("counts,true_class," + ",".join(report.class_names))
    for i, name in enumerate(report.class_names):
        row = ",".join(str(int(v)) for v in report.matrix.counts[i])
        lines.append(f"counts,{name},{row}")
    normalized, _ = report.matrix.normalized()
    lines.append("normalized_pct,true_class," + ",".join(report.class_names))
    for i, name in enumerate(report.class_names):
        row = ",".join(_round2(100.0 * v) for v in normalized[i])
        lines.append(f"normalized_pct,{name},{row}")
    return "\n".join(lines) + "\n"


def _render_text(report: EvalReport) -> str:
    if report.empty:
        return "no data: the test split is empty\n"
    normalized, empty_rows = report.matrix.normalized()
    width = max(len(n) for n in report.class_names) + 2
    header = " " * width + "".join(f"{n:>{width}}" for n in report.class_names)
    lines = [
        f"test size: {report.test_size}",
        f"accuracy:  {_round2(100.0 * report.accuracy)}%",
        f"eval time: {report.eval_seconds:.3f}s",
        "",
        "normalized confusion (rows: true, columns: predicted, %):",
        header,
    ]
    for i, name in enumerate(report.class_names):
        cells = "".join(f"{_round2(100.0 * v):>{width}}" for v in normalized[i])
        suffix = "  (no test samples)" if i in empty_rows else ""
        lines.append(f"{name:<{width}}{cells}{suffix}")
    lines.append("")
    lines.append("per-class precision / recall:")
    for i, name in enumerate(report.class_names):
        precision = report.per_class_precision[i]
        recall = report.per_class_recall[i]
        ptext = "n/a" if precision is None else _round2(100.0 * precision) + "%"
        rtext = "n/a" if recall is None else _round2(100.0 * recall) + "%"
        lines.append(f"{name:<{width}}{ptext:>10} {rtext:>10}")
    return "\n".join(lines) + "\n"
