from __future__ import annotations

import pytest

from causalprompt.corpus import Label, LabeledCorpus, LabeledInstance

# class sizes of the shared-task training partition our fixtures mirror
TRAIN_POSITIVES = 1603
TRAIN_NEGATIVES = 1322


def build_corpus(n_pos: int, n_neg: int, name: str = "synthetic", prefix: str = "") -> LabeledCorpus:
    """Deterministic synthetic corpus with distinct sentence texts."""
    instances = []
    for i in range(n_pos):
        instances.append(
            LabeledInstance(
                f"{prefix}p{i}",
                f"{prefix}storm {i} caused flooding in district {i % 7}",
                Label.POSITIVE,
            )
        )
    for i in range(n_neg):
        instances.append(
            LabeledInstance(
                f"{prefix}n{i}",
                f"{prefix}market {i} opened quietly on day {i % 5}",
                Label.NEGATIVE,
            )
        )
    return LabeledCorpus(tuple(instances), name)


@pytest.fixture(scope="session")
def train_shaped_corpus() -> LabeledCorpus:
    """Corpus with the same size and class counts as the task's train split."""
    return build_corpus(TRAIN_POSITIVES, TRAIN_NEGATIVES, "train-shaped")


@pytest.fixture()
def small_corpus() -> LabeledCorpus:
    return build_corpus(6, 6, "small")


def write_corpus_csv(path, rows, header=("text", "label")) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
