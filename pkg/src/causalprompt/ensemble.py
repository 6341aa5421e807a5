"""Combining cached model predictions.

Two combination schemes: stochastic greedy TOP-N fusion, which averages
class probabilities over a growing member set and keeps a candidate only on
a strict F1 improvement, restarted many times from random seeds; and plain
per-instance majority voting over an odd number of label vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import Prediction
from .corpus import Label, LabeledCorpus
from .evaluation import positive_f1_fast
from .streams import stream

#: probability row column order matches the Label enum values.
_NEG, _POS = int(Label.NEGATIVE), int(Label.POSITIVE)


@dataclass
class PredictionMatrix:
    """Per-model class-probability rows over one evaluation set.

    ``probs[m, i]`` is ``(p_negative, p_positive)`` of model ``m`` on
    instance ``i``, indexed like the Label enum; ``gold`` holds the instance
    labels the fusion objective is measured against.
    """

    model_ids: list[str]
    instance_ids: list[str]
    probs: np.ndarray
    gold: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=float)
        self.gold = np.asarray(self.gold, dtype=int)
        m, i = len(self.model_ids), len(self.instance_ids)
        if len(set(self.model_ids)) != m:
            raise ValueError("duplicate model ids")
        if len(set(self.instance_ids)) != i:
            raise ValueError("duplicate instance ids")
        if self.probs.shape != (m, i, 2):
            raise ValueError(f"probs must have shape ({m}, {i}, 2), got {self.probs.shape}")
        if self.gold.shape != (i,):
            raise ValueError("gold labels misaligned with instance ids")
        if not np.all((self.gold == _NEG) | (self.gold == _POS)):
            raise ValueError("gold labels must be binary")
        sums = self.probs.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=1e-6):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"probability rows must sum to 1 within 1e-6 (worst {worst:.2e})")
        if self.probs.min() < -1e-9:
            raise ValueError("negative probabilities")

    @property
    def n_models(self) -> int:
        return len(self.model_ids)


@dataclass(frozen=True)
class EnsembleResult:
    member_ids: tuple[str, ...]
    fused_f1: float
    seed_model: str
    restart_index: int

    def __post_init__(self) -> None:
        if not self.member_ids:
            raise ValueError("an ensemble needs at least one member")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError("duplicate ensemble members")
        if self.seed_model not in self.member_ids:
            raise ValueError("seed model must be an ensemble member")


@dataclass(frozen=True)
class RestartRecord:
    index: int
    seed_model: str
    seed_f1: float
    final_f1: float
    member_ids: tuple[str, ...]


def _labels_from_sums(prob_sums: np.ndarray) -> np.ndarray:
    """Boolean positive mask; exact ties go positive (same rule as
    ClassProbabilities.label)."""
    return prob_sums[:, _POS] >= prob_sums[:, _NEG]


def average_probs(
    matrix: PredictionMatrix, subset: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise mean of the subset's probability rows plus argmax labels."""
    subset = list(subset)
    if not subset:
        raise ValueError("empty model subset")
    if len(set(subset)) != len(subset):
        raise ValueError("duplicate model indices")
    for index in subset:
        if not 0 <= index < matrix.n_models:
            raise ValueError(f"model index {index} out of range")
    averaged = matrix.probs[subset].mean(axis=0)
    labels = np.where(_labels_from_sums(averaged), _POS, _NEG)
    return averaged, labels


def topn_fusion(
    matrix: PredictionMatrix, restarts: int, seed: int = 0
) -> tuple[EnsembleResult, list[RestartRecord]]:
    """Stochastic greedy ensemble construction over ``restarts`` restarts.

    Each restart seeds the ensemble with one uniformly random model, shuffles
    the rest, and tries each exactly once, keeping it only when the averaged
    F1 strictly improves.  Restarts are independent, each on its own named
    random stream, so results do not depend on scheduling.  The best restart
    wins; equal F1 prefers fewer members, then the earlier restart.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be positive, got {restarts}")
    if matrix.n_models < 1:
        raise ValueError("empty prediction matrix")
    gold_positive = matrix.gold.astype(bool)
    probs = matrix.probs
    n_models = matrix.n_models

    def fused_f1(prob_sums: np.ndarray) -> float:
        return positive_f1_fast(_labels_from_sums(prob_sums), gold_positive)

    best: tuple[float, int, int] | None = None  # (f1, members, restart)
    best_members: list[int] = []
    records: list[RestartRecord] = []
    for r in range(restarts):
        rng = stream(seed, "restart", r)
        seed_index = int(rng.integers(n_models))
        rest = np.delete(np.arange(n_models), seed_index)
        rng.shuffle(rest)
        members = [seed_index]
        sums = probs[seed_index].copy()
        current = fused_f1(sums)
        seed_f1 = current
        for candidate in rest:
            trial = sums + probs[candidate]
            f1 = fused_f1(trial)
            if f1 > current:
                sums = trial
                current = f1
                members.append(int(candidate))
        records.append(
            RestartRecord(
                index=r,
                seed_model=matrix.model_ids[seed_index],
                seed_f1=seed_f1,
                final_f1=current,
                member_ids=tuple(matrix.model_ids[i] for i in members),
            )
        )
        key = (current, -len(members), -r)
        if best is None or key > (best[0], -best[1], -best[2]):
            best = (current, len(members), r)
            best_members = members
    assert best is not None
    winner = records[best[2]]
    return (
        EnsembleResult(
            member_ids=tuple(matrix.model_ids[i] for i in best_members),
            fused_f1=best[0],
            seed_model=winner.seed_model,
            restart_index=best[2],
        ),
        records,
    )


def majority_vote(prediction_vectors: Sequence[Sequence[Label | int]]) -> np.ndarray:
    """Per-instance majority label over an odd number of aligned vectors."""
    n = len(prediction_vectors)
    if n < 1 or n % 2 == 0:
        raise ValueError(f"majority voting needs an odd number of prediction vectors, got {n}")
    stacked = np.asarray(prediction_vectors, dtype=int)
    if stacked.ndim != 2:
        raise ValueError("prediction vectors must share one length")
    positives = (stacked == _POS).sum(axis=0)
    return np.where(positives > n // 2, _POS, _NEG)


# ---------------------------------------------------------------------------
# prediction cache files
# ---------------------------------------------------------------------------

def write_prediction_cache(
    path: str | Path, model_id: str, predictions: Sequence[Prediction]
) -> None:
    """Append-free JSONL cache: one record per instance prediction."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(
                json.dumps(
                    {
                        "model_id": model_id,
                        "instance_id": p.instance_id,
                        "p_positive": p.probabilities.p_positive,
                        "p_negative": p.probabilities.p_negative,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_prediction_cache(path: str | Path) -> dict[str, dict[str, tuple[float, float]]]:
    """Parse a cache file into {model_id: {instance_id: (p_pos, p_neg)}}."""
    out: dict[str, dict[str, tuple[float, float]]] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            model, instance = row["model_id"], row["instance_id"]
            pair = (float(row["p_positive"]), float(row["p_negative"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}, line {line_no + 1}: malformed cache record ({exc})")
        per_model = out.setdefault(model, {})
        if instance in per_model:
            raise ValueError(f"{path}: duplicate prediction for {model!r}/{instance!r}")
        per_model[instance] = pair
    if not out:
        raise ValueError(f"no prediction records in {path}")
    return out


def load_prediction_matrix(
    paths: Sequence[str | Path], gold: LabeledCorpus
) -> PredictionMatrix:
    """Assemble a matrix from cache files, aligned against a gold corpus.

    Every model must cover exactly the gold corpus's instance ids; rows are
    checked for normalization on construction.
    """
    merged: dict[str, dict[str, tuple[float, float]]] = {}
    for path in paths:
        for model, rows in read_prediction_cache(path).items():
            if model in merged:
                raise ValueError(f"model id {model!r} appears in more than one cache")
            merged[model] = rows
    instance_ids = list(gold.ids())
    wanted = set(instance_ids)
    model_ids = sorted(merged)
    probs = np.zeros((len(model_ids), len(instance_ids), 2))
    for m, model in enumerate(model_ids):
        rows = merged[model]
        missing = wanted - rows.keys()
        extra = rows.keys() - wanted
        if missing or extra:
            raise ValueError(
                f"cache for {model!r} misaligned with gold ids "
                f"(missing {sorted(missing)[:5]}, extra {sorted(extra)[:5]})"
            )
        for i, instance_id in enumerate(instance_ids):
            p_pos, p_neg = rows[instance_id]
            probs[m, i, _POS] = p_pos
            probs[m, i, _NEG] = p_neg
    return PredictionMatrix(
        model_ids=model_ids,
        instance_ids=instance_ids,
        probs=probs,
        gold=np.asarray([int(label) for label in gold.labels()]),
    )
