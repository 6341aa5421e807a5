"""Pretrained-model gateways and their deterministic stub implementations.

The pipeline consumes three model capabilities: mask-logit scoring (with MLM
fine-tuning), sentence embedding, and template candidate generation.  Each is
specified as a small protocol so real backends can be swapped in; the stub
classes here satisfy the same contracts with zero model downloads and are
bit-reproducible from their seeds, which is what the test suite runs on.

Stub scoring rule: the score vector for a prompt is a frozen pseudo-random
lookup of the prompt text.  Stub training rule: each fine-tune step adds
``update_size`` to the target word's score for every prompt in the batch and,
when a label oracle is attached, grows a global alignment term ``skill`` that
pushes the oracle words toward the correct prediction for any prompt whose
input sentence the oracle knows.  Both rules are deterministic.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .corpus import Label
from .prompting import INPUT_SLOT, MASK_SLOT, Template, TemplateOrigin, Verbalizer
from .streams import stream


class GatewayKind(str, enum.Enum):
    MLM = "mlm"
    EMBEDDER = "embedder"
    GENERATOR = "generator"
    STUB = "stub"


@dataclass(frozen=True)
class GatewayDescriptor:
    kind: GatewayKind
    model_name: str
    max_sequence_length: int = 256
    device: str | None = None
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        if self.max_sequence_length < 8:
            raise ValueError(f"max_sequence_length must be >= 8, got {self.max_sequence_length}")


@dataclass(frozen=True)
class MaskLogits:
    """Vocabulary score vector observed at the mask position of a prompt."""

    scores: np.ndarray
    mask_index: int

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 1:
            raise ValueError("scores must be a 1-D vector")
        if not np.all(np.isfinite(scores)):
            raise ValueError("non-finite mask logits")
        object.__setattr__(self, "scores", scores)


@dataclass
class OptimizerState:
    """Carries the step counter and the verbalizer binding through training."""

    step: int = 0
    binding: tuple[int, int] | None = None
    payload: Any = None


@runtime_checkable
class MaskModel(Protocol):
    descriptor: GatewayDescriptor

    def vocab_id(self, word: str) -> int | None: ...
    def encoded_length(self, text: str) -> int: ...
    def mask_logits(self, prompt_text: str) -> MaskLogits: ...
    def fine_tune_step(
        self, batch: Sequence[tuple[str, int]], state: OptimizerState, config
    ) -> tuple[OptimizerState, float]: ...
    def snapshot(self) -> dict: ...
    def restore(self, snapshot: dict) -> None: ...


@runtime_checkable
class SentenceEmbedder(Protocol):
    descriptor: GatewayDescriptor

    def embed(self, text: str) -> np.ndarray: ...


@runtime_checkable
class TemplateGenerator(Protocol):
    descriptor: GatewayDescriptor

    def generate(self, filled_inputs: Sequence[str], beam_width: int) -> list[tuple[str, float]]: ...


@runtime_checkable
class SequenceClassifier(Protocol):
    descriptor: GatewayDescriptor

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray: ...
    def train_step(self, batch: Sequence[tuple[str, int]], lr: float) -> float: ...
    def snapshot(self) -> dict: ...
    def restore(self, snapshot: dict) -> None: ...


def bind_verbalizer(gateway: MaskModel, verbalizer: Verbalizer) -> tuple[int, int]:
    """Resolve both label words to single vocabulary ids, or fail loudly."""
    ids = []
    for word in (verbalizer.word_positive, verbalizer.word_negative):
        vid = gateway.vocab_id(word)
        if vid is None:
            raise ValueError(
                f"label word {word!r} does not map to a single vocabulary unit "
                f"of gateway {gateway.descriptor.model_name!r}"
            )
        ids.append(vid)
    return ids[0], ids[1]


def tokenize_with_mask(text: str) -> list[str]:
    """Whitespace tokenization with the mask slot split out of glued tokens.

    ``[MASK]ities`` encodes as a standalone mask token followed by the glued
    suffix, so the scored position is always a single mask token.
    """
    tokens: list[str] = []
    for raw in text.split():
        while MASK_SLOT in raw:
            before, _, after = raw.partition(MASK_SLOT)
            if before:
                tokens.append(before)
            tokens.append(MASK_SLOT)
            raw = after
        if raw:
            tokens.append(raw)
    return tokens


def _single_mask_index(prompt_text: str) -> int:
    tokens = tokenize_with_mask(prompt_text)
    positions = [i for i, tok in enumerate(tokens) if tok == MASK_SLOT]
    if len(positions) != 1:
        raise ValueError(
            f"prompt must contain exactly one {MASK_SLOT!r}, found {len(positions)}"
        )
    return positions[0]


#: small fixed vocabulary shared by the stub models; includes the label-word
#: candidates plus filler entries so scores have somewhere to hide.
DEFAULT_VOCABULARY: tuple[str, ...] = (
    "causal",
    "random",
    "casual",
    "cause",
    "coincidence",
    "choice",
    "effect",
    "accident",
    "deliberate",
    "natural",
    "true",
    "false",
    "yes",
    "no",
    "good",
    "bad",
) + tuple(f"filler{i:02d}" for i in range(16))


class HashMaskModel:
    """Deterministic MLM stand-in backed by hashed score lookups.

    Optionally carries a label ``oracle`` (sentence text -> Label):  training
    then also grows an alignment term that makes prompts over known sentences
    drift toward the correct label word, so evaluation scores improve over
    training steps the way a real fine-tune would.
    """

    def __init__(
        self,
        seed: int = 0,
        vocabulary: Sequence[str] = DEFAULT_VOCABULARY,
        max_sequence_length: int = 256,
        update_size: float = 0.25,
        skill_per_step: float = 0.0,
        oracle: Mapping[str, Label] | None = None,
        oracle_words: tuple[str, str] = ("causal", "random"),
        name: str = "stub-mlm",
        noise_scale: float = 1.0,
    ) -> None:
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, name, max_sequence_length)
        self.seed = seed
        self.vocabulary = tuple(vocabulary)
        self._index = {word: i for i, word in enumerate(self.vocabulary)}
        if len(self._index) != len(self.vocabulary):
            raise ValueError("stub vocabulary has duplicate entries")
        self.update_size = float(update_size)
        self.skill_per_step = float(skill_per_step)
        self.noise_scale = float(noise_scale)
        self._oracle = dict(oracle) if oracle else {}
        self._oracle_texts = sorted(self._oracle)
        for word in oracle_words:
            if word not in self._index:
                raise ValueError(f"oracle word {word!r} missing from stub vocabulary")
        self._oracle_ids = (self._index[oracle_words[0]], self._index[oracle_words[1]])
        self._delta: dict[str, np.ndarray] = {}
        self._skill = 0.0
        self._steps = 0

    # -- vocabulary ---------------------------------------------------------
    def vocab_id(self, word: str) -> int | None:
        if " " in word:
            return None
        return self._index.get(word)

    def encoded_length(self, text: str) -> int:
        return len(tokenize_with_mask(text))

    # -- scoring ------------------------------------------------------------
    def _base_scores(self, prompt_text: str) -> np.ndarray:
        rng = stream(self.seed, "scores", prompt_text)
        return rng.normal(0.0, self.noise_scale, len(self.vocabulary))

    def _oracle_label(self, prompt_text: str) -> Label | None:
        """Label of the earliest known sentence occurring in the prompt.

        The input segment precedes any demonstration, so the earliest match
        is the instance being classified.
        """
        best: tuple[int, str] | None = None
        for text in self._oracle_texts:
            at = prompt_text.find(text)
            if at >= 0 and (best is None or at < best[0]):
                best = (at, text)
        return self._oracle[best[1]] if best else None

    def mask_logits(self, prompt_text: str) -> MaskLogits:
        mask_index = _single_mask_index(prompt_text)
        length = self.encoded_length(prompt_text)
        if length > self.descriptor.max_sequence_length:
            raise ValueError(
                f"prompt encodes to {length} tokens, over the gateway maximum "
                f"{self.descriptor.max_sequence_length}"
            )
        scores = self._base_scores(prompt_text)
        delta = self._delta.get(prompt_text)
        if delta is not None:
            scores = scores + delta
        if self._skill and self._oracle:
            label = self._oracle_label(prompt_text)
            if label is not None:
                sign = 1.0 if label is Label.POSITIVE else -1.0
                scores[self._oracle_ids[0]] += sign * self._skill
                scores[self._oracle_ids[1]] -= sign * self._skill
        return MaskLogits(scores=scores, mask_index=mask_index)

    # -- training -----------------------------------------------------------
    def fine_tune_step(
        self, batch: Sequence[tuple[str, int]], state: OptimizerState, config
    ) -> tuple[OptimizerState, float]:
        if not batch:
            raise ValueError("empty fine-tune batch")
        if state.binding is None:
            raise ValueError("optimizer state carries no verbalizer binding")
        id_pos, id_neg = state.binding
        losses = []
        for prompt_text, target in batch:
            scores = self.mask_logits(prompt_text).scores
            if target not in (id_pos, id_neg):
                raise ValueError(f"target id {target} is not a bound label word")
            pair = np.array([scores[target], scores[id_neg if target == id_pos else id_pos]])
            shifted = pair - pair.max()
            losses.append(float(-shifted[0] + np.log(np.exp(shifted).sum())))
        loss = float(np.mean(losses))
        if not np.isfinite(loss):
            raise ValueError(f"non-finite training loss {loss!r}")
        for prompt_text, target in batch:
            delta = self._delta.setdefault(prompt_text, np.zeros(len(self.vocabulary)))
            delta[target] += self.update_size
        self._skill += self.skill_per_step
        self._steps += 1
        state.step += 1
        return state, loss

    # -- checkpointing ------------------------------------------------------
    def snapshot(self) -> dict:
        return {
            "steps": self._steps,
            "skill": self._skill,
            "delta": {k: v.tolist() for k, v in sorted(self._delta.items())},
        }

    def restore(self, snapshot: dict) -> None:
        self._steps = int(snapshot["steps"])
        self._skill = float(snapshot["skill"])
        self._delta = {k: np.asarray(v, dtype=float) for k, v in snapshot["delta"].items()}


class TableMaskModel:
    """Mask model with explicit per-prompt score vectors, for hand fixtures.

    Scoring only; fine-tuning a fixed table is a contradiction and errors.
    """

    def __init__(
        self,
        table: Mapping[str, Sequence[float]],
        vocabulary: Sequence[str] = DEFAULT_VOCABULARY,
        max_sequence_length: int = 256,
        name: str = "table-mlm",
    ) -> None:
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, name, max_sequence_length)
        self.vocabulary = tuple(vocabulary)
        self._index = {word: i for i, word in enumerate(self.vocabulary)}
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        for prompt, scores in self.table.items():
            if scores.shape != (len(self.vocabulary),):
                raise ValueError(f"score vector for {prompt!r} must have length {len(self.vocabulary)}")

    def vocab_id(self, word: str) -> int | None:
        if " " in word:
            return None
        return self._index.get(word)

    def encoded_length(self, text: str) -> int:
        return len(tokenize_with_mask(text))

    def mask_logits(self, prompt_text: str) -> MaskLogits:
        mask_index = _single_mask_index(prompt_text)
        if prompt_text not in self.table:
            raise ValueError(f"no scored entry for prompt {prompt_text!r}")
        return MaskLogits(scores=self.table[prompt_text].copy(), mask_index=mask_index)

    def fine_tune_step(self, batch, state, config):
        raise ValueError("table-backed stub does not support fine-tuning")

    def snapshot(self) -> dict:
        return {"table": {k: v.tolist() for k, v in sorted(self.table.items())}}

    def restore(self, snapshot: dict) -> None:
        self.table = {k: np.asarray(v, dtype=float) for k, v in snapshot["table"].items()}


class HashEmbedder:
    """Deterministic unit-norm sentence embeddings from hashed draws.

    Exact vectors can be pinned per text through ``table``.
    """

    def __init__(
        self,
        dim: int = 16,
        seed: int = 0,
        table: Mapping[str, Sequence[float]] | None = None,
        name: str = "stub-embedder",
    ) -> None:
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, name)
        if dim < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.dim = dim
        self.seed = seed
        self.table = {k: np.asarray(v, dtype=float) for k, v in (table or {}).items()}

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        if text in self.table:
            vec = self.table[text]
        else:
            vec = stream(self.seed, "embed", text).normal(size=self.dim)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError(f"zero embedding pinned for {text!r}")
        return vec / norm


class StubTemplateGenerator:
    """Generator that returns a canned decode list regardless of the inputs.

    Entries are pattern strings in template syntax, optionally paired with a
    generation score; unscored entries score by list position, descending.
    """

    def __init__(
        self,
        decodes: Sequence[str | tuple[str, float]],
        name: str = "stub-generator",
    ) -> None:
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, name)
        self._decodes: list[tuple[str, float]] = []
        for i, entry in enumerate(decodes):
            if isinstance(entry, str):
                self._decodes.append((entry, float(len(decodes) - i)))
            else:
                pattern, score = entry
                self._decodes.append((str(pattern), float(score)))

    def generate(self, filled_inputs: Sequence[str], beam_width: int) -> list[tuple[str, float]]:
        if not filled_inputs:
            raise ValueError("no generation inputs")
        for text in filled_inputs:
            if "<P>" not in text or "<S>" not in text:
                raise ValueError(f"generation input lacks <P>/<S> slots: {text!r}")
        return list(self._decodes)


def generate_template_candidates(
    gateway: TemplateGenerator, filled_inputs: Sequence[str], beam_width: int
) -> list[tuple[Template, float]]:
    """Decode, validate, deduplicate and rank candidate templates.

    Invalid decodes (not exactly one input slot and one mask slot) are
    dropped; duplicates keep their best score; the surviving candidates are
    sorted by score descending and capped at ``beam_width``.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be positive, got {beam_width}")
    best: dict[str, float] = {}
    for pattern, score in gateway.generate(filled_inputs, beam_width):
        if pattern.count(INPUT_SLOT) != 1 or pattern.count(MASK_SLOT) != 1:
            continue
        if pattern not in best or score > best[pattern]:
            best[pattern] = score
    if not best:
        raise ValueError("generation produced zero valid template candidates")
    ranked = sorted(best.items(), key=lambda item: (-item[1], item[0]))[:beam_width]
    return [
        (Template(pattern, origin=TemplateOrigin.GENERATED, score=score), score)
        for pattern, score in ranked
    ]


class HashSequenceClassifier:
    """Deterministic sequence-classification stand-in for baseline training.

    Same construction as the mask stub: hashed base logits per text, a
    per-text boost toward trained labels, and an oracle-driven ``skill`` term
    so dev metrics move during training.  Updates scale with the current
    learning rate relative to ``reference_lr``.
    """

    def __init__(
        self,
        seed: int = 0,
        update_size: float = 0.25,
        skill_per_step: float = 0.0,
        reference_lr: float = 5e-5,
        oracle: Mapping[str, Label] | None = None,
        name: str = "stub-classifier",
        noise_scale: float = 1.0,
    ) -> None:
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, name)
        self.seed = seed
        self.update_size = float(update_size)
        self.skill_per_step = float(skill_per_step)
        self.reference_lr = float(reference_lr)
        self.noise_scale = float(noise_scale)
        self._oracle = dict(oracle) if oracle else {}
        self._delta: dict[str, np.ndarray] = {}
        self._skill = 0.0

    def _logits(self, text: str) -> np.ndarray:
        logits = stream(self.seed, "cls", text).normal(0.0, self.noise_scale, 2)
        delta = self._delta.get(text)
        if delta is not None:
            logits = logits + delta
        if self._skill and text in self._oracle:
            sign = 1.0 if self._oracle[text] is Label.POSITIVE else -1.0
            logits[int(Label.POSITIVE)] += sign * self._skill
            logits[int(Label.NEGATIVE)] -= sign * self._skill
        return logits

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            logits = self._logits(text)
            shifted = logits - logits.max()
            expd = np.exp(shifted)
            rows.append(expd / expd.sum())
        return np.asarray(rows)

    def train_step(self, batch: Sequence[tuple[str, int]], lr: float) -> float:
        if not batch:
            raise ValueError("empty training batch")
        losses = []
        for text, label in batch:
            logits = self._logits(text)
            shifted = logits - logits.max()
            losses.append(float(-shifted[int(label)] + np.log(np.exp(shifted).sum())))
        scale = lr / self.reference_lr
        for text, label in batch:
            delta = self._delta.setdefault(text, np.zeros(2))
            delta[int(label)] += self.update_size * scale
        self._skill += self.skill_per_step * scale
        return float(np.mean(losses))

    def snapshot(self) -> dict:
        return {
            "skill": self._skill,
            "delta": {k: v.tolist() for k, v in sorted(self._delta.items())},
        }

    def restore(self, snapshot: dict) -> None:
        self._skill = float(snapshot["skill"])
        self._delta = {k: np.asarray(v, dtype=float) for k, v in snapshot["delta"].items()}


# ---------------------------------------------------------------------------
# Checkpoint directories
# ---------------------------------------------------------------------------

def save_checkpoint(directory: str | Path, snapshot: dict, manifest: dict) -> Path:
    """Write an opaque checkpoint directory with its identifying manifest.

    The manifest records {step, dev_f1, template, verbalizer, seed}; the
    state file holds whatever the gateway's ``snapshot`` returned.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (directory / "state.json").write_text(
        json.dumps(snapshot, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_checkpoint(directory: str | Path) -> tuple[dict, dict]:
    """Read back (snapshot, manifest) from a checkpoint directory."""
    directory = Path(directory)
    state_file = directory / "state.json"
    manifest_file = directory / "manifest.json"
    if not state_file.is_file() or not manifest_file.is_file():
        raise ValueError(f"not a checkpoint directory: {directory}")
    snapshot = json.loads(state_file.read_text(encoding="utf-8"))
    manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    return snapshot, manifest
