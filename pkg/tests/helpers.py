"""Shared fixtures-adjacent helpers for the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from causalprompt.corpus import Label
from causalprompt.ensemble import PredictionMatrix
from causalprompt.evaluation import positive_f1_fast
from causalprompt.gateway import (
    DEFAULT_VOCABULARY,
    GatewayDescriptor,
    GatewayKind,
    MaskLogits,
    tokenize_with_mask,
)

P, N = int(Label.POSITIVE), int(Label.NEGATIVE)


def scores_with(pos: float, neg: float, base: float = 0.0) -> np.ndarray:
    """Stub-vocabulary score vector with pinned label-word entries."""
    vec = np.full(len(DEFAULT_VOCABULARY), base)
    vec[DEFAULT_VOCABULARY.index("causal")] = pos
    vec[DEFAULT_VOCABULARY.index("random")] = neg
    return vec


class SequencedMaskModel:
    """Test fake returning queued score vectors call by call."""

    def __init__(self, queue):
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, "sequenced", 256)
        self.queue = list(queue)
        self._index = {w: i for i, w in enumerate(DEFAULT_VOCABULARY)}

    def vocab_id(self, word):
        return self._index.get(word) if " " not in word else None

    def encoded_length(self, text):
        return len(tokenize_with_mask(text))

    def mask_logits(self, prompt_text):
        return MaskLogits(self.queue.pop(0), 0)

    def fine_tune_step(self, batch, state, config):
        raise NotImplementedError

    def snapshot(self):
        return {}

    def restore(self, snapshot):
        pass


def matrix_from_positive_probs(p_pos, gold, ids=None) -> PredictionMatrix:
    """Build a prediction matrix from an (M, I) array of positive-class
    probabilities."""
    p_pos = np.asarray(p_pos, dtype=float)
    m, i = p_pos.shape
    probs = np.zeros((m, i, 2))
    probs[:, :, P] = p_pos
    probs[:, :, N] = 1.0 - p_pos
    return PredictionMatrix(
        model_ids=list(ids) if ids else [f"model{j}" for j in range(m)],
        instance_ids=[f"inst{j}" for j in range(i)],
        probs=probs,
        gold=np.asarray(gold, dtype=int),
    )


def exhaustive_best_f1(matrix: PredictionMatrix) -> float:
    """Oracle: enumerate every non-empty model subset and average directly."""
    gold = matrix.gold.astype(bool)
    best = 0.0
    for size in range(1, matrix.n_models + 1):
        for subset in itertools.combinations(range(matrix.n_models), size):
            mean = matrix.probs[list(subset)].mean(axis=0)
            pred = mean[:, P] >= mean[:, N]
            best = max(best, positive_f1_fast(pred, gold))
    return best
