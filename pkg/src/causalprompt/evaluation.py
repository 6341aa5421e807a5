"""Binary confusion-matrix metrics with the causal class as positive."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Label


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    accuracy: float
    f1: float
    counts: ConfusionCounts
    warnings: tuple[str, ...] = ()


def confusion(predictions: Sequence[Label | int], gold: Sequence[Label | int]) -> ConfusionCounts:
    """Standard binary counts; positive = causal."""
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(gold, dtype=int)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions vs {true.shape[0]} gold labels")
    if pred.size == 0:
        raise ValueError("empty prediction vector")
    p, g = pred.astype(bool), true.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
        tn=int(np.count_nonzero(~p & ~g)),
    )


def harmonic_f1(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both vanish."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def metrics(counts: ConfusionCounts) -> MetricsReport:
    """Precision/recall/accuracy/F1 from counts.

    Zero denominators yield 0 with a warning flag instead of raising, so
    degenerate all-one-class predictions never crash a sweep.
    """
    if counts.total == 0:
        raise ValueError("empty confusion counts")
    warnings: list[str] = []
    if counts.tp + counts.fp == 0:
        precision = 0.0
        warnings.append("precision_zero_division")
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall = 0.0
        warnings.append("recall_zero_division")
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if precision + recall == 0:
        warnings.append("f1_zero_division")
    return MetricsReport(
        precision=precision,
        recall=recall,
        accuracy=(counts.tp + counts.tn) / counts.total,
        f1=harmonic_f1(precision, recall),
        counts=counts,
        warnings=tuple(warnings),
    )


def f1_score(predictions: Sequence[Label | int], gold: Sequence[Label | int]) -> float:
    return metrics(confusion(predictions, gold)).f1


def positive_f1_fast(pred_positive: np.ndarray, gold_positive: np.ndarray) -> float:
    """Vectorized F1 over boolean positive masks.

    Uses F1 = 2·tp / (predicted_positives + gold_positives), the same
    quantity as the harmonic mean without intermediate divisions; returns 0
    on an all-negative degenerate case.
    """
    tp = int(np.count_nonzero(pred_positive & gold_positive))
    denom = int(np.count_nonzero(pred_positive)) + int(np.count_nonzero(gold_positive))
    return 2.0 * tp / denom if denom else 0.0


def consistency_check(rows: Sequence[tuple[float, float, float]]) -> list[float]:
    """Per-row |F1 - harmonic(P, R)| for (P, R, F1) triples in percent."""
    deviations = []
    for p, r, f1 in rows:
        for value in (p, r, f1):
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"percentage out of range: {value}")
        deviations.append(abs(f1 - harmonic_f1(p, r)))
    return deviations


def report_record(report: MetricsReport) -> dict:
    """Machine-readable form of a report."""
    return {
        "precision": report.precision,
        "recall": report.recall,
        "accuracy": report.accuracy,
        "f1": report.f1,
        "counts": {
            "tp": report.counts.tp,
            "fp": report.counts.fp,
            "fn": report.counts.fn,
            "tn": report.counts.tn,
        },
        "warnings": list(report.warnings),
    }


def render_report(report: MetricsReport, title: str = "evaluation") -> str:
    """Human-readable metrics table."""
    c = report.counts
    lines = [
        title,
        "-" * max(len(title), 28),
        f"precision  {report.precision:8.4f}",
        f"recall     {report.recall:8.4f}",
        f"accuracy   {report.accuracy:8.4f}",
        f"f1         {report.f1:8.4f}",
        f"counts     tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}",
    ]
    if report.warnings:
        lines.append(f"warnings   {', '.join(report.warnings)}")
    return "\n".join(lines)


def error_listing(
    ids: Sequence[str], predictions: Sequence[Label | int], gold: Sequence[Label | int]
) -> list[str]:
    """Ids where prediction and gold disagree, with the direction of the miss."""
    out = []
    for instance_id, pred, true in zip(ids, predictions, gold):
        if int(pred) != int(true):
            kind = "false_positive" if int(pred) == int(Label.POSITIVE) else "false_negative"
            out.append(f"{instance_id}\t{kind}")
    return out
