"""Labeled corpora, few-shot splits, evaluation subsets and k-fold partitions.

A corpus is an ordered, immutable collection of sentences with binary labels
(positive = the sentence expresses a cause-effect relation).  All sampling
here is class-stratified, without replacement, and driven by explicit seeds,
so any split can be reconstructed bit-exactly from its parameters or from a
split manifest written to disk.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .streams import stream


class Label(enum.IntEnum):
    """Binary class of an instance; POSITIVE means causal."""

    NEGATIVE = 0
    POSITIVE = 1


#: Accepted spellings per label, matched case-insensitively.
LABEL_ALIASES = {
    "1": Label.POSITIVE,
    "0": Label.NEGATIVE,
    "causal": Label.POSITIVE,
    "non-causal": Label.NEGATIVE,
    "true": Label.POSITIVE,
    "false": Label.NEGATIVE,
}


def parse_label(raw: str | int | Label) -> Label:
    """Parse a raw label value; anything outside the accepted sets errors."""
    if isinstance(raw, Label):
        return raw
    if isinstance(raw, bool):
        return Label.POSITIVE if raw else Label.NEGATIVE
    if isinstance(raw, int):
        raw = str(raw)
    key = raw.strip().lower()
    if key not in LABEL_ALIASES:
        raise ValueError(
            f"unmapped label value {raw!r}: expected one of "
            "1/0, causal/non-causal, true/false (case-insensitive)"
        )
    return LABEL_ALIASES[key]


@dataclass(frozen=True)
class LabeledInstance:
    """One sentence with its binary label.

    ``text`` is stored whitespace-trimmed and must be non-empty; ``id`` must
    be unique within a corpus.
    """

    id: str
    text: str
    label: Label

    def __post_init__(self) -> None:
        object.__setattr__(self, "text", self.text.strip())
        if not self.text:
            raise ValueError(f"instance {self.id!r} has empty text")
        object.__setattr__(self, "label", Label(self.label))


@dataclass(frozen=True)
class LabeledCorpus:
    """An ordered list of labeled instances with unique ids."""

    instances: tuple[LabeledInstance, ...]
    name: str = "corpus"

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        seen: set[str] = set()
        for inst in self.instances:
            if inst.id in seen:
                raise ValueError(f"duplicate instance id {inst.id!r} in corpus {self.name!r}")
            seen.add(inst.id)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[LabeledInstance]:
        return iter(self.instances)

    def __getitem__(self, index: int) -> LabeledInstance:
        return self.instances[index]

    @property
    def counts(self) -> tuple[int, int]:
        """(positive, negative) instance counts."""
        n_pos = sum(1 for inst in self.instances if inst.label is Label.POSITIVE)
        return n_pos, len(self.instances) - n_pos

    def by_label(self, label: Label) -> tuple[LabeledInstance, ...]:
        return tuple(inst for inst in self.instances if inst.label is label)

    def ids(self) -> tuple[str, ...]:
        return tuple(inst.id for inst in self.instances)

    def labels(self) -> tuple[Label, ...]:
        return tuple(inst.label for inst in self.instances)

    def subset(self, ids: Sequence[str], name: str | None = None) -> "LabeledCorpus":
        """Sub-corpus containing ``ids``, in original corpus order."""
        wanted = set(ids)
        missing = wanted - set(self.ids())
        if missing:
            raise ValueError(f"ids not in corpus {self.name!r}: {sorted(missing)[:5]}")
        picked = tuple(inst for inst in self.instances if inst.id in wanted)
        return LabeledCorpus(picked, name or f"{self.name}:subset")

    def digest(self) -> str:
        """SHA-256 over the canonical content, independent of file format."""
        h = hashlib.sha256()
        for inst in self.instances:
            h.update(inst.id.encode())
            h.update(b"\x00")
            h.update(str(int(inst.label)).encode())
            h.update(b"\x00")
            h.update(inst.text.encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class ColumnSchema:
    """Maps corpus-file column names onto instance fields.

    When ``id`` is None, ids are assigned from the file row index (0-based,
    counted over data rows).
    """

    text: str = "text"
    label: str = "label"
    id: str | None = None


@dataclass(frozen=True)
class FewShotSplit:
    """A (train, eval) split with exactly ``k`` instances per class in train."""

    train: LabeledCorpus
    eval: LabeledCorpus
    k: int
    seed: int

    def __post_init__(self) -> None:
        n_pos, n_neg = self.train.counts
        if n_pos != self.k or n_neg != self.k:
            raise ValueError(
                f"train side must hold exactly k={self.k} instances per class, "
                f"got ({n_pos}, {n_neg})"
            )
        overlap = set(self.train.ids()) & set(self.eval.ids())
        if overlap:
            raise ValueError(f"train and eval overlap on ids {sorted(overlap)[:5]}")


def _delimiter_for(path: Path) -> str:
    return "\t" if path.suffix.lower() in {".tsv", ".tab"} else ","


def load_corpus(
    path: str | Path,
    schema: ColumnSchema | None = None,
    name: str | None = None,
) -> LabeledCorpus:
    """Load a delimited text file (comma or tab by extension) with a header row.

    Args:
        path: corpus file; ``.tsv``/``.tab`` are read tab-separated, anything
            else comma-separated.
        schema: column mapping; defaults to columns named ``text``/``label``.
        name: corpus name; defaults to the file stem.

    Raises:
        FileNotFoundError: missing file.
        ValueError: missing columns, unmapped label values, duplicate ids or
            an empty file.
    """
    path = Path(path)
    schema = schema or ColumnSchema()
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    instances: list[LabeledInstance] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=_delimiter_for(path))
        fields = reader.fieldnames or []
        for column in filter(None, (schema.text, schema.label, schema.id)):
            if column not in fields:
                raise ValueError(f"column {column!r} not found in {path} (has {fields})")
        for row_index, row in enumerate(reader):
            try:
                label = parse_label(row[schema.label])
            except ValueError as exc:
                raise ValueError(f"{path}, data row {row_index}: {exc}") from exc
            instance_id = row[schema.id] if schema.id else str(row_index)
            instances.append(LabeledInstance(instance_id, row[schema.text], label))
    if not instances:
        raise ValueError(f"no instances in {path}")
    return LabeledCorpus(tuple(instances), name or path.stem)


def make_fewshot_split(corpus: LabeledCorpus, k: int, seed: int) -> FewShotSplit:
    """Uniformly sample ``k`` instances per class into train; rest becomes eval.

    The sampling is without replacement and a pure function of
    ``(corpus, k, seed)``.  Both sides preserve the source corpus order.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    for label in (Label.POSITIVE, Label.NEGATIVE):
        available = len(corpus.by_label(label))
        if k > available:
            raise ValueError(
                f"k={k} exceeds the {label.name.lower()} class count: "
                f"only {available} {label.name.lower()} instances available"
            )
    train_ids: set[str] = set()
    for label in (Label.POSITIVE, Label.NEGATIVE):
        members = corpus.by_label(label)
        rng = stream(seed, "fewshot", label.name)
        chosen = rng.permutation(len(members))[:k]
        train_ids.update(members[i].id for i in chosen)
    train = tuple(inst for inst in corpus if inst.id in train_ids)
    remainder = tuple(inst for inst in corpus if inst.id not in train_ids)
    return FewShotSplit(
        train=LabeledCorpus(train, f"{corpus.name}:train-k{k}"),
        eval=LabeledCorpus(remainder, f"{corpus.name}:eval-k{k}"),
        k=k,
        seed=seed,
    )


def sample_eval_subset(corpus: LabeledCorpus, m: int, seed: int) -> LabeledCorpus:
    """Sample ``m`` positives and ``m`` negatives without replacement."""
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    keep: set[str] = set()
    for label in (Label.POSITIVE, Label.NEGATIVE):
        members = corpus.by_label(label)
        if m > len(members):
            raise ValueError(
                f"subset needs {m} {label.name.lower()} instances, "
                f"corpus {corpus.name!r} has only {len(members)}"
            )
        rng = stream(seed, "subset", label.name)
        chosen = rng.permutation(len(members))[:m]
        keep.update(members[i].id for i in chosen)
    picked = tuple(inst for inst in corpus if inst.id in keep)
    return LabeledCorpus(picked, f"{corpus.name}:subset-m{m}")


def make_kfold(
    corpus: LabeledCorpus, folds: int, seed: int
) -> list[tuple[LabeledCorpus, LabeledCorpus]]:
    """Class-stratified k-fold partition as (train, dev) corpus pairs.

    Dev folds are pairwise disjoint, cover the corpus, and their sizes differ
    by at most one.  Within each class the fold assignment is a seeded
    round-robin deal, with the dealing pointer carried across classes so the
    overall fold sizes stay balanced.
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if folds > len(corpus):
        raise ValueError(f"folds={folds} exceeds corpus size {len(corpus)}")
    assignment: dict[str, int] = {}
    pointer = 0
    for label in (Label.POSITIVE, Label.NEGATIVE):
        members = corpus.by_label(label)
        rng = stream(seed, "kfold", label.name)
        for i in rng.permutation(len(members)):
            assignment[members[int(i)].id] = pointer % folds
            pointer += 1
    pairs = []
    for fold in range(folds):
        dev = tuple(inst for inst in corpus if assignment[inst.id] == fold)
        train = tuple(inst for inst in corpus if assignment[inst.id] != fold)
        pairs.append(
            (
                LabeledCorpus(train, f"{corpus.name}:fold{fold}-train"),
                LabeledCorpus(dev, f"{corpus.name}:fold{fold}-dev"),
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# Split manifests
# ---------------------------------------------------------------------------

def split_manifest(split: FewShotSplit, source: LabeledCorpus) -> dict:
    """Manifest record from which the split can be rebuilt bit-exactly."""
    return {
        "source_name": source.name,
        "source_checksum": source.digest(),
        "k": split.k,
        "seed": split.seed,
        "train_ids": list(split.train.ids()),
        "eval_ids": list(split.eval.ids()),
    }


def write_split_manifest(path: str | Path, split: FewShotSplit, source: LabeledCorpus) -> None:
    payload = json.dumps(split_manifest(split, source), indent=2, sort_keys=True)
    Path(path).write_text(payload + "\n", encoding="utf-8")


def load_split_manifest(path: str | Path, source: LabeledCorpus) -> FewShotSplit:
    """Rebuild a split from its manifest, verifying the source checksum."""
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    checksum = source.digest()
    if record["source_checksum"] != checksum:
        raise ValueError(
            f"split manifest {path} was built from a different corpus "
            f"(checksum {record['source_checksum'][:12]}… != {checksum[:12]}…)"
        )
    return FewShotSplit(
        train=source.subset(record["train_ids"], f"{source.name}:train-k{record['k']}"),
        eval=source.subset(record["eval_ids"], f"{source.name}:eval-k{record['k']}"),
        k=record["k"],
        seed=record["seed"],
    )
