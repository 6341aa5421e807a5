"""Templates, verbalizers and demonstration-augmented prompt construction.

A template is a text pattern with one input slot and one mask slot.  An
input prompt is the template instantiated on a sentence; a demonstration is
the template filled with a known instance *and* its label word.  The full
prompt for classification concatenates the input prompt with one positive
and one negative demonstration, leaving a single mask to score.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Label, LabeledCorpus, LabeledInstance
from .streams import stream

INPUT_SLOT = "[x]"
MASK_SLOT = "[MASK]"

#: separator between the input prompt and each demonstration; a single space
#: prevents accidental word merging at segment boundaries.
SEGMENT_SEPARATOR = " "


class TemplateOrigin(str, enum.Enum):
    MANUAL = "manual"
    GENERATED = "generated"


@dataclass(frozen=True)
class Template:
    """A prompt pattern holding exactly one input slot and one mask slot."""

    pattern: str
    origin: TemplateOrigin = TemplateOrigin.MANUAL
    score: float | None = None

    def __post_init__(self) -> None:
        if not self.pattern:
            raise ValueError("template pattern is empty")
        if self.pattern.count(INPUT_SLOT) != 1:
            raise ValueError(f"pattern must contain exactly one {INPUT_SLOT!r}: {self.pattern!r}")
        if self.pattern.count(MASK_SLOT) != 1:
            raise ValueError(f"pattern must contain exactly one {MASK_SLOT!r}: {self.pattern!r}")


@dataclass(frozen=True)
class Verbalizer:
    """Label-to-word mapping; the words must be distinct."""

    word_positive: str
    word_negative: str

    def __post_init__(self) -> None:
        if not self.word_positive or not self.word_negative:
            raise ValueError("verbalizer words must be non-empty")
        if self.word_positive == self.word_negative:
            raise ValueError("verbalizer words must be distinct")

    def word_for(self, label: Label) -> str:
        return self.word_positive if label is Label.POSITIVE else self.word_negative


@dataclass(frozen=True)
class Demonstration:
    """An answered prompt: the template filled with an instance and its label word."""

    instance: LabeledInstance
    rendered: str

    def __post_init__(self) -> None:
        if MASK_SLOT in self.rendered:
            raise ValueError("a demonstration must not contain a mask slot")


@dataclass(frozen=True)
class PromptBundle:
    """Input prompt plus one demonstration per class, concatenated."""

    input_prompt: str
    demonstrations: tuple[str, str]
    full_text: str
    mask_position_hint: int

    def __post_init__(self) -> None:
        if self.full_text.count(MASK_SLOT) != 1:
            raise ValueError("bundle text must contain exactly one mask slot")


def instantiate(template: Template, x: LabeledInstance) -> str:
    """Replace the input slot with ``x.text``; the mask slot survives verbatim."""
    return template.pattern.replace(INPUT_SLOT, x.text)


def fill_mask(template: Template, word: str) -> str:
    """Replace the mask slot with ``word``; the input slot survives verbatim."""
    if not word:
        raise ValueError("label word must be non-empty")
    return template.pattern.replace(MASK_SLOT, word)


def render_demonstration(
    template: Template, verbalizer: Verbalizer, instance: LabeledInstance
) -> Demonstration:
    """Fill the template with both the instance text and its label word."""
    rendered = fill_mask(template, verbalizer.word_for(instance.label))
    rendered = rendered.replace(INPUT_SLOT, instance.text)
    return Demonstration(instance=instance, rendered=rendered)


def embed_corpus(embedder, corpus: LabeledCorpus) -> dict[str, np.ndarray]:
    """Precompute sentence embeddings keyed by sentence text."""
    return {inst.text: embedder.embed(inst.text) for inst in corpus}


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cannot rank by similarity against a zero embedding")
    return float(np.dot(a, b) / (na * nb))


def similarity_pool(
    x: LabeledInstance,
    pool: LabeledCorpus,
    label: Label,
    embeddings: Mapping[str, np.ndarray],
    fraction: float,
) -> tuple[LabeledInstance, ...]:
    """Top-``ceil(fraction * n)`` pool members of ``label`` most similar to ``x``.

    The input instance itself is excluded; similarity ties break by instance
    id so the pool is deterministic.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    candidates = [
        inst
        for inst in pool.by_label(label)
        if not (inst.id == x.id and inst.text == x.text)
    ]
    if not candidates:
        raise ValueError(f"no {label.name.lower()} demonstration candidates besides the input")
    try:
        anchor = embeddings[x.text]
        ranked = sorted(
            candidates,
            key=lambda inst: (-_cosine(anchor, embeddings[inst.text]), inst.id),
        )
    except KeyError as exc:
        raise ValueError(f"embeddings do not cover text {exc.args[0]!r}") from exc
    keep = max(1, math.ceil(fraction * len(ranked) - 1e-9))
    return tuple(ranked[:keep])


def sample_demonstrations(
    x: LabeledInstance,
    pool: LabeledCorpus,
    embeddings: Mapping[str, np.ndarray],
    fraction: float = 0.5,
    seed: int = 0,
) -> tuple[LabeledInstance, LabeledInstance]:
    """Pick one positive and one negative demonstration instance for ``x``.

    Each is drawn uniformly from the top-``fraction`` most (cosine) similar
    pool members of its class, never returning ``x`` itself.
    """
    picks = []
    for label in (Label.POSITIVE, Label.NEGATIVE):
        ranked = similarity_pool(x, pool, label, embeddings, fraction)
        rng = stream(seed, "demo", label.name)
        picks.append(ranked[int(rng.integers(len(ranked)))])
    return picks[0], picks[1]


def _assemble(
    template: Template,
    input_prompt: str,
    rendered_positive: str,
    rendered_negative: str,
    separator: str = SEGMENT_SEPARATOR,
) -> PromptBundle:
    full_text = separator.join((input_prompt, rendered_positive, rendered_negative))
    return PromptBundle(
        input_prompt=input_prompt,
        demonstrations=(rendered_positive, rendered_negative),
        full_text=full_text,
        mask_position_hint=full_text.index(MASK_SLOT),
    )


def build_prompt_bundle(
    template: Template,
    verbalizer: Verbalizer,
    x: LabeledInstance,
    demos: tuple[LabeledInstance, LabeledInstance],
    separator: str = SEGMENT_SEPARATOR,
) -> PromptBundle:
    """Concatenate input prompt, positive demo and negative demo, in that order."""
    positive, negative = demos
    if positive.label is not Label.POSITIVE:
        raise ValueError(f"first demonstration must be positive, got {positive.label.name}")
    if negative.label is not Label.NEGATIVE:
        raise ValueError(f"second demonstration must be negative, got {negative.label.name}")
    return _assemble(
        template,
        instantiate(template, x),
        render_demonstration(template, verbalizer, positive).rendered,
        render_demonstration(template, verbalizer, negative).rendered,
        separator,
    )


def _truncate_words(text: str) -> str:
    """Drop the last whitespace word; empty when nothing remains."""
    words = text.split()
    return " ".join(words[:-1])


def fit_bundle(
    template: Template,
    verbalizer: Verbalizer,
    x: LabeledInstance,
    demos: tuple[LabeledInstance, LabeledInstance],
    encoded_length: Callable[[str], int],
    max_length: int,
    separator: str = SEGMENT_SEPARATOR,
) -> PromptBundle:
    """Build a bundle, shortening demonstration texts until it encodes within
    ``max_length``.

    Words are dropped from the end of the negative demonstration first, then
    the positive one.  The input prompt is never touched; if it alone exceeds
    the limit this fails.
    """
    positive, negative = demos
    bundle = build_prompt_bundle(template, verbalizer, x, demos, separator)
    pos_text, neg_text = positive.text, negative.text

    def render(text: str, label: Label) -> str:
        filled = fill_mask(template, verbalizer.word_for(label))
        return filled.replace(INPUT_SLOT, text)

    while encoded_length(bundle.full_text) > max_length:
        if neg_text:
            neg_text = _truncate_words(neg_text)
        elif pos_text:
            pos_text = _truncate_words(pos_text)
        else:
            raise ValueError(
                f"prompt for instance {x.id!r} exceeds the maximum encoded length "
                f"{max_length} even with empty demonstrations"
            )
        bundle = _assemble(
            template,
            bundle.input_prompt,
            render(pos_text, Label.POSITIVE),
            render(neg_text, Label.NEGATIVE),
            separator,
        )
    return bundle


def load_templates(path: str | Path, origin: TemplateOrigin = TemplateOrigin.MANUAL) -> list[Template]:
    """Read a template file: one pattern per line, ``#`` comments ignored."""
    templates = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        templates.append(Template(line, origin=origin))
    if not templates:
        raise ValueError(f"no templates in {path}")
    return templates


def save_templates(path: str | Path, templates: Sequence[Template]) -> None:
    Path(path).write_text("".join(t.pattern + "\n" for t in templates), encoding="utf-8")
