"""Automatic template search: generate, rank zero-shot, fine-tune, select.

The search wires the corpus, prompting, gateway and classifier pieces into
one pipeline: build a few-shot split, condition the generator on the train
side to propose candidate templates, rank all candidates zero-shot on a
small evaluation subset, fine-tune the shortlist, and pick the finalist with
the best F1 on the held-out dev corpus.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Protocol

from .classifier import FinetuneResult, TrainConfig, classify_corpus, finetune_prompt_model
from .corpus import FewShotSplit, LabeledCorpus, make_fewshot_split, sample_eval_subset
from .evaluation import f1_score
from .gateway import (
    MaskModel,
    SentenceEmbedder,
    TemplateGenerator,
    generate_template_candidates,
)
from .prompting import Template, TemplateOrigin, Verbalizer
from .streams import stream_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateReport:
    template: Template
    zero_shot_f1: float
    rank: int


@dataclass(frozen=True)
class Finalist:
    template: Template
    snapshot: dict
    eval_f1: float
    dev_f1: float
    train_seed: int


@dataclass
class SearchResult:
    finalists: list[Finalist]
    selected: int
    provenance: dict

    @property
    def selected_finalist(self) -> Finalist:
        return self.finalists[self.selected]


@dataclass(frozen=True)
class GatewayBundle:
    mlm: MaskModel
    embedder: SentenceEmbedder | None
    generator: TemplateGenerator


@dataclass(frozen=True)
class SearchConfig:
    m: int = 256
    rank_d: int = 1
    finalist_count: int = 10
    seed: int = 0
    seeds_per_template: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_d: int = 1
    eval_subsample: int | None = None
    demo_fraction: float = 0.5
    demos_in_training: bool = True

    def __post_init__(self) -> None:
        if self.m < 1 or self.rank_d < 1 or self.finalist_count < 1:
            raise ValueError("m, rank_d and finalist_count must be positive")
        if self.seeds_per_template < 1:
            raise ValueError("seeds_per_template must be positive")


class StageStore(Protocol):
    """Persistence hook making long searches resumable stage by stage.

    ``load`` returns the payload saved for a stage, or None when the stage
    must be (re)computed; payloads are JSON-serializable dicts.
    """

    def load(self, stage: str) -> dict | None: ...
    def save(self, stage: str, payload: dict) -> None: ...


def build_generation_inputs(train: LabeledCorpus, verbalizer: Verbalizer) -> list[str]:
    """One generator input per training instance: its text, then the label
    word framed by the two generation slots."""
    if len(train) == 0:
        raise ValueError("cannot build generation inputs from an empty corpus")
    return [f"{inst.text}<P>{verbalizer.word_for(inst.label)}<S>" for inst in train]


def rank_candidates(
    candidates: list[Template],
    subset: LabeledCorpus,
    verbalizer: Verbalizer,
    gateway: MaskModel,
    d: int = 1,
    seed: int = 0,
) -> list[CandidateReport]:
    """Score every candidate zero-shot on the subset and sort by F1.

    No fine-tuning happens here.  Ties order by generation score (higher
    first), then by pattern text, so the ranking is stable.
    """
    if not candidates:
        raise ValueError("no candidate templates to rank")
    scored = []
    gold = subset.labels()
    for template in candidates:
        predictions = classify_corpus(
            subset, template, verbalizer, gateway, d=d,
            seed=stream_seed(seed, "rank", template.pattern),
        )
        scored.append((template, f1_score([p.predicted_label for p in predictions], gold)))
    scored.sort(
        key=lambda item: (
            -item[1],
            -(item[0].score if item[0].score is not None else -math.inf),
            item[0].pattern,
        )
    )
    return [
        CandidateReport(template=t, zero_shot_f1=f1, rank=i + 1)
        for i, (t, f1) in enumerate(scored)
    ]


def _stage(store: StageStore | None, name: str, compute, encode, decode):
    """Load a stage payload from the store or compute-and-save it."""
    if store is not None:
        payload = store.load(name)
        if payload is not None:
            return decode(payload)
    value = compute()
    if store is not None:
        store.save(name, encode(value))
    return value


def run_search(
    corpus: LabeledCorpus,
    dev: LabeledCorpus,
    k: int,
    verbalizer: Verbalizer,
    gateways: GatewayBundle,
    beam_width: int = 100,
    config: SearchConfig = SearchConfig(),
    store: StageStore | None = None,
) -> SearchResult:
    """Run the full template search and return finalists plus provenance.

    The gateway's pristine state is snapshotted once and restored before each
    finalist's fine-tuning run, so finalists never see each other's updates.
    The provenance block records every stage's parameters and intermediate
    rankings, enough to re-run any stage bit-identically; with a ``store``,
    completed stages are persisted and an interrupted search resumes from the
    last one instead of recomputing.
    """
    split = _stage(
        store,
        "split",
        lambda: make_fewshot_split(corpus, k, stream_seed(config.seed, "split")),
        lambda s: {"train_ids": list(s.train.ids()), "eval_ids": list(s.eval.ids()),
                   "k": s.k, "seed": s.seed},
        lambda p: FewShotSplit(
            train=corpus.subset(p["train_ids"], f"{corpus.name}:train-k{p['k']}"),
            eval=corpus.subset(p["eval_ids"], f"{corpus.name}:eval-k{p['k']}"),
            k=p["k"], seed=p["seed"],
        ),
    )
    candidates = _stage(
        store,
        "candidates",
        lambda: generate_template_candidates(
            gateways.generator, build_generation_inputs(split.train, verbalizer), beam_width
        ),
        lambda cs: {"candidates": [[t.pattern, s] for t, s in cs]},
        lambda p: [
            (Template(pattern, origin=TemplateOrigin.GENERATED, score=score), score)
            for pattern, score in p["candidates"]
        ],
    )
    by_pattern = {t.pattern: t for t, _ in candidates}

    def compute_ranking() -> tuple[LabeledCorpus, list[CandidateReport]]:
        subset = sample_eval_subset(split.eval, config.m, stream_seed(config.seed, "subset"))
        reports = rank_candidates(
            [t for t, _ in candidates], subset, verbalizer, gateways.mlm,
            d=config.rank_d, seed=config.seed,
        )
        return subset, reports

    subset, reports = _stage(
        store,
        "ranking",
        compute_ranking,
        lambda pair: {
            "subset_ids": list(pair[0].ids()),
            "ranking": [
                {"pattern": r.template.pattern, "zero_shot_f1": r.zero_shot_f1, "rank": r.rank}
                for r in pair[1]
            ],
        },
        lambda p: (
            split.eval.subset(p["subset_ids"], f"{corpus.name}:subset-m{config.m}"),
            [
                CandidateReport(by_pattern[r["pattern"]], r["zero_shot_f1"], r["rank"])
                for r in p["ranking"]
            ],
        ),
    )
    shortlist = reports[: config.finalist_count]

    embedder = gateways.embedder if config.demos_in_training else None
    pristine = gateways.mlm.snapshot()

    def compute_finalists() -> list[Finalist]:
        finalists: list[Finalist] = []
        for report in shortlist:
            best: tuple[FinetuneResult, int] | None = None
            for attempt in range(config.seeds_per_template):
                gateways.mlm.restore(pristine)
                train_seed = stream_seed(config.seed, "train", report.rank, attempt)
                result = finetune_prompt_model(
                    gateways.mlm, split, report.template, verbalizer,
                    replace(config.train, seed=train_seed),
                    embedder=embedder,
                    demo_fraction=config.demo_fraction,
                    eval_d=config.eval_d,
                    eval_subsample=config.eval_subsample,
                )
                if best is None or result.best_f1 > best[0].best_f1:
                    best = (result, train_seed)
            assert best is not None
            result, train_seed = best
            gateways.mlm.restore(result.best_snapshot)
            dev_predictions = classify_corpus(
                dev, report.template, verbalizer, gateways.mlm,
                pool=split.train if embedder is not None else None,
                embedder=embedder,
                d=config.eval_d,
                demo_fraction=config.demo_fraction,
                seed=stream_seed(config.seed, "dev", report.rank),
            )
            dev_f1 = f1_score([p.predicted_label for p in dev_predictions], dev.labels())
            finalists.append(
                Finalist(
                    template=report.template,
                    snapshot=result.best_snapshot,
                    eval_f1=result.best_f1 if result.snapshot_taken else 0.0,
                    dev_f1=dev_f1,
                    train_seed=train_seed,
                )
            )
        return finalists

    finalists = _stage(
        store,
        "finalists",
        compute_finalists,
        lambda fs: {
            "finalists": [
                {"pattern": f.template.pattern, "snapshot": f.snapshot,
                 "eval_f1": f.eval_f1, "dev_f1": f.dev_f1, "train_seed": f.train_seed}
                for f in fs
            ]
        },
        lambda p: [
            Finalist(by_pattern[f["pattern"]], f["snapshot"], f["eval_f1"],
                     f["dev_f1"], f["train_seed"])
            for f in p["finalists"]
        ],
    )
    gateways.mlm.restore(pristine)

    selected = max(range(len(finalists)), key=lambda i: (finalists[i].dev_f1, -i))
    eval_order = sorted(range(len(finalists)), key=lambda i: -finalists[i].eval_f1)
    eval_rank = eval_order.index(selected) + 1
    warning = None
    if eval_rank > 3:
        warning = (
            f"dev-selected finalist ranks #{eval_rank} by eval-split F1; "
            "dev and eval orderings disagree"
        )
        logger.warning(warning)

    provenance = {
        "k": k,
        "seed": config.seed,
        "beam_width": beam_width,
        "m": config.m,
        "rank_d": config.rank_d,
        "seeds_per_template": config.seeds_per_template,
        "split": {
            "train_ids": list(split.train.ids()),
            "eval_ids": list(split.eval.ids()),
            "source_checksum": corpus.digest(),
        },
        "subset_ids": list(subset.ids()),
        "candidates": [
            {"pattern": t.pattern, "generation_score": s} for t, s in candidates
        ],
        "ranking": [
            {"rank": r.rank, "pattern": r.template.pattern, "zero_shot_f1": r.zero_shot_f1}
            for r in reports
        ],
        "selected_eval_rank": eval_rank,
        "warning": warning,
    }
    return SearchResult(finalists=finalists, selected=selected, provenance=provenance)
