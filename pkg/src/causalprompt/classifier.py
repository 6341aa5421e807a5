"""Prompt scoring and the two training loops.

Classification scores a prompt by softmaxing the mask logits of the two
label words only.  With demonstrations, ``d`` independently augmented
prompts are scored and their label-word logits averaged *before* the
softmax; averaging probabilities instead is a different scheme and is
deliberately not what this implements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import FewShotSplit, Label, LabeledCorpus, LabeledInstance, sample_eval_subset
from .evaluation import confusion, f1_score, metrics
from .gateway import MaskLogits, MaskModel, OptimizerState, SentenceEmbedder, SequenceClassifier, bind_verbalizer
from .prompting import (
    Template,
    Verbalizer,
    embed_corpus,
    fit_bundle,
    instantiate,
    sample_demonstrations,
)
from .streams import stream, stream_seed


@dataclass(frozen=True)
class ClassProbabilities:
    """Two-class probabilities; must sum to one."""

    p_positive: float
    p_negative: float

    def __post_init__(self) -> None:
        for p in (self.p_positive, self.p_negative):
            if not (math.isfinite(p) and -1e-9 <= p <= 1.0 + 1e-9):
                raise ValueError(f"probability out of range: {p}")
        if abs(self.p_positive + self.p_negative - 1.0) > 1e-9:
            raise ValueError(
                f"probabilities must sum to 1, got {self.p_positive + self.p_negative}"
            )

    def label(self) -> Label:
        # exact ties predict positive, by convention
        return Label.POSITIVE if self.p_positive >= self.p_negative else Label.NEGATIVE


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    probabilities: ClassProbabilities
    predicted_label: Label

    def __post_init__(self) -> None:
        if self.predicted_label is not self.probabilities.label():
            raise ValueError("predicted label disagrees with the argmax rule")

    @classmethod
    def from_probabilities(cls, instance_id: str, probabilities: ClassProbabilities) -> "Prediction":
        return cls(instance_id, probabilities, probabilities.label())


@dataclass(frozen=True)
class TrainConfig:
    """Prompt-model fine-tuning knobs (AdamW family)."""

    learning_rate: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    max_steps: int = 1000
    eval_every: int = 100
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.max_steps < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("max_steps, eval_every and batch_size must be positive")
        if self.eval_every > self.max_steps:
            raise ValueError("eval_every must not exceed max_steps")


def softmax_pair(score_positive: float, score_negative: float) -> ClassProbabilities:
    """Numerically stabilized two-way softmax."""
    if not (math.isfinite(score_positive) and math.isfinite(score_negative)):
        raise ValueError("non-finite label-word scores")
    top = max(score_positive, score_negative)
    e_pos = math.exp(score_positive - top)
    e_neg = math.exp(score_negative - top)
    total = e_pos + e_neg
    return ClassProbabilities(p_positive=e_pos / total, p_negative=e_neg / total)


def restricted_softmax(logits: MaskLogits, binding: tuple[int, int]) -> ClassProbabilities:
    """Softmax over exactly the two bound label-word scores."""
    id_pos, id_neg = binding
    scores = logits.scores
    for vid in binding:
        if not 0 <= vid < scores.shape[0]:
            raise ValueError(f"vocabulary id {vid} outside score vector of length {scores.shape[0]}")
    return softmax_pair(float(scores[id_pos]), float(scores[id_neg]))


def _bundle_text(
    x: LabeledInstance,
    template: Template,
    verbalizer: Verbalizer,
    gateway: MaskModel,
    pool: LabeledCorpus | None,
    embeddings: Mapping[str, np.ndarray] | None,
    demo_fraction: float,
    seed: int,
) -> str:
    if pool is None:
        return instantiate(template, x)
    assert embeddings is not None
    demos = sample_demonstrations(x, pool, embeddings, fraction=demo_fraction, seed=seed)
    bundle = fit_bundle(
        template,
        verbalizer,
        x,
        demos,
        encoded_length=gateway.encoded_length,
        max_length=gateway.descriptor.max_sequence_length,
    )
    return bundle.full_text


def _resolve_embeddings(
    pool: LabeledCorpus | None,
    extra: Sequence[LabeledInstance],
    embedder: SentenceEmbedder | None,
    embeddings: Mapping[str, np.ndarray] | None,
) -> Mapping[str, np.ndarray] | None:
    if pool is None:
        return None
    if embeddings is None:
        if embedder is None:
            raise ValueError("demonstrations need either an embedder or precomputed embeddings")
        embeddings = dict(embed_corpus(embedder, pool))
    else:
        embeddings = dict(embeddings)
    if embedder is not None:
        for inst in extra:
            if inst.text not in embeddings:
                embeddings[inst.text] = embedder.embed(inst.text)
    return embeddings


def classify(
    x: LabeledInstance,
    template: Template,
    verbalizer: Verbalizer,
    gateway: MaskModel,
    *,
    pool: LabeledCorpus | None = None,
    embedder: SentenceEmbedder | None = None,
    embeddings: Mapping[str, np.ndarray] | None = None,
    d: int = 1,
    demo_fraction: float = 0.5,
    seed: int = 0,
    binding: tuple[int, int] | None = None,
) -> tuple[Prediction, list[tuple[float, float]]]:
    """Score ``x`` with ``d`` prompts, averaging label-word logits.

    With a demonstration ``pool``, each of the ``d`` prompts gets its own
    independently sampled demonstration pair; without one, the bare input
    prompt is scored.  Returns the prediction and the d raw logit pairs.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    binding = binding or bind_verbalizer(gateway, verbalizer)
    embeddings = _resolve_embeddings(pool, [x], embedder, embeddings)
    pairs: list[tuple[float, float]] = []
    for j in range(d):
        text = _bundle_text(
            x, template, verbalizer, gateway, pool, embeddings,
            demo_fraction, stream_seed(seed, "prompt", j),
        )
        logits = gateway.mask_logits(text)
        pairs.append((float(logits.scores[binding[0]]), float(logits.scores[binding[1]])))
    averaged = np.mean(np.asarray(pairs, dtype=float), axis=0)
    probabilities = softmax_pair(float(averaged[0]), float(averaged[1]))
    return Prediction.from_probabilities(x.id, probabilities), pairs


def classify_corpus(
    instances: LabeledCorpus | Sequence[LabeledInstance],
    template: Template,
    verbalizer: Verbalizer,
    gateway: MaskModel,
    *,
    pool: LabeledCorpus | None = None,
    embedder: SentenceEmbedder | None = None,
    embeddings: Mapping[str, np.ndarray] | None = None,
    d: int = 1,
    demo_fraction: float = 0.5,
    seed: int = 0,
) -> list[Prediction]:
    """Classify a batch, deriving one sub-seed per instance id."""
    binding = bind_verbalizer(gateway, verbalizer)
    items = list(instances)
    embeddings = _resolve_embeddings(pool, items, embedder, embeddings)
    predictions = []
    for x in items:
        prediction, _ = classify(
            x, template, verbalizer, gateway,
            pool=pool, embeddings=embeddings, d=d, demo_fraction=demo_fraction,
            seed=stream_seed(seed, "instance", x.id), binding=binding,
        )
        predictions.append(prediction)
    return predictions


@dataclass(frozen=True)
class TrainRecord:
    step: int
    loss: float
    dev_f1: float | None = None
    checkpointed: bool = False

    def record(self) -> dict:
        return {"step": self.step, "loss": self.loss, "dev_f1": self.dev_f1,
                "checkpointed": self.checkpointed}


@dataclass
class FinetuneResult:
    best_snapshot: dict
    best_f1: float
    best_step: int
    snapshot_taken: bool
    log: list[TrainRecord]

    @property
    def checkpoint_f1s(self) -> list[float]:
        return [r.dev_f1 for r in self.log if r.checkpointed and r.dev_f1 is not None]

    @property
    def eval_events(self) -> int:
        return sum(1 for r in self.log if r.dev_f1 is not None)


def finetune_prompt_model(
    gateway: MaskModel,
    split: FewShotSplit,
    template: Template,
    verbalizer: Verbalizer,
    config: TrainConfig,
    *,
    embedder: SentenceEmbedder | None = None,
    demo_fraction: float = 0.5,
    eval_d: int = 1,
    eval_subsample: int | None = None,
) -> FinetuneResult:
    """Fine-tune as masked-word prediction on the split's train side.

    Every ``eval_every`` steps the model is scored on the split's eval side
    and snapshotted iff the F1 strictly improves, so the sequence of
    checkpointed F1 values is strictly increasing.  When an ``embedder`` is
    given, each training example is wrapped with freshly sampled
    demonstrations on every epoch pass, excluding itself from the pool.
    """
    binding = bind_verbalizer(gateway, verbalizer)
    embeddings = embed_corpus(embedder, split.train) if embedder is not None else None
    eval_corpus = split.eval
    if eval_subsample is not None:
        eval_corpus = sample_eval_subset(
            split.eval, eval_subsample, stream_seed(config.seed, "evalsub")
        )
    initial = gateway.snapshot()
    state = OptimizerState(binding=binding)
    log: list[TrainRecord] = []
    best_f1, best_step, best_snapshot = -math.inf, 0, None
    step, epoch = 0, 0
    pool = split.train if embedder is not None else None

    def evaluate() -> float:
        predictions = classify_corpus(
            eval_corpus, template, verbalizer, gateway,
            pool=pool, embedder=embedder, embeddings=embeddings,
            d=eval_d, demo_fraction=demo_fraction,
            seed=stream_seed(config.seed, "eval", step),
        )
        return f1_score([p.predicted_label for p in predictions], eval_corpus.labels())

    while step < config.max_steps:
        order = stream(config.seed, "order", epoch).permutation(len(split.train))
        for start in range(0, len(order), config.batch_size):
            if step >= config.max_steps:
                break
            batch = []
            for i in order[start : start + config.batch_size]:
                x = split.train[int(i)]
                text = _bundle_text(
                    x, template, verbalizer, gateway, pool, embeddings,
                    demo_fraction, stream_seed(config.seed, "demo", epoch, x.id),
                )
                batch.append((text, binding[0] if x.label is Label.POSITIVE else binding[1]))
            state, loss = gateway.fine_tune_step(batch, state, config)
            if not math.isfinite(loss):
                raise ValueError(f"non-finite loss {loss!r} at step {step + 1}")
            step += 1
            if step % config.eval_every == 0:
                dev_f1 = evaluate()
                checkpointed = dev_f1 > best_f1
                if checkpointed:
                    best_f1, best_step, best_snapshot = dev_f1, step, gateway.snapshot()
                log.append(TrainRecord(step, loss, dev_f1, checkpointed))
            else:
                log.append(TrainRecord(step, loss))
        epoch += 1

    if best_snapshot is None:
        return FinetuneResult(initial, -math.inf, 0, False, log)
    return FinetuneResult(best_snapshot, best_f1, best_step, True, log)


# ---------------------------------------------------------------------------
# standard fine-tuning baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineConfig:
    """Standard sequence-classification fine-tuning knobs."""

    learning_rate: float = 5e-5
    betas: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 32
    epochs: int = 50
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size and epochs must be positive")


def linear_schedule(base_lr: float, total_steps: int):
    """Learning rate decaying linearly from ``base_lr`` at step 0 to 0 at
    ``total_steps``."""
    if total_steps < 1:
        raise ValueError("total_steps must be positive")

    def lr_at(step: int) -> float:
        return base_lr * max(0.0, 1.0 - step / total_steps)

    return lr_at


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    mean_loss: float
    dev_f1: float
    dev_accuracy: float


@dataclass
class BaselineResult:
    best_snapshot: dict
    best_f1: float
    best_epoch: int
    snapshot_taken: bool
    epoch_reports: list[EpochReport]
    lr_log: list[float]


def baseline_finetune(
    gateway: SequenceClassifier,
    train: LabeledCorpus,
    dev: LabeledCorpus,
    config: BaselineConfig,
) -> BaselineResult:
    """Standard cross-entropy fine-tuning with linearly decaying learning rate.

    Steps per epoch use ceiling division (the last batch may be partial);
    dev metrics are reported after every epoch and the best-F1 state is
    snapshotted.
    """
    steps_per_epoch = math.ceil(len(train) / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    lr_at = linear_schedule(config.learning_rate, total_steps)
    lr_log: list[float] = []
    reports: list[EpochReport] = []
    best_f1, best_epoch, best_snapshot = -math.inf, 0, None
    global_step = 0
    dev_texts = [inst.text for inst in dev]
    dev_gold = dev.labels()
    for epoch in range(config.epochs):
        order = stream(config.seed, "order", epoch).permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [
                (train[int(i)].text, int(train[int(i)].label))
                for i in order[start : start + config.batch_size]
            ]
            lr = lr_at(global_step)
            losses.append(gateway.train_step(batch, lr))
            lr_log.append(lr)
            global_step += 1
        proba = gateway.predict_proba(dev_texts)
        predicted = [
            Label.POSITIVE if row[int(Label.POSITIVE)] >= row[int(Label.NEGATIVE)] else Label.NEGATIVE
            for row in proba
        ]
        report = metrics(confusion(predicted, dev_gold))
        reports.append(EpochReport(epoch, float(np.mean(losses)), report.f1, report.accuracy))
        if report.f1 > best_f1:
            best_f1, best_epoch, best_snapshot = report.f1, epoch, gateway.snapshot()
    if best_snapshot is None:
        return BaselineResult(gateway.snapshot(), -math.inf, 0, False, reports, lr_log)
    return BaselineResult(best_snapshot, best_f1, best_epoch, True, reports, lr_log)
