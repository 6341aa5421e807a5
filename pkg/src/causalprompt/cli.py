"""Command-line surface: split, search, classify, fuse, eval.

Every command resolves its settings from an optional YAML config file plus
flags (flags win), writes a JSON manifest embedding the resolved settings
and input checksums, and touches its output directory under a lock file.
Identical flags, inputs and seeds produce byte-identical primary outputs.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml
from filelock import FileLock

from .classifier import TrainConfig, classify_corpus
from .corpus import (
    ColumnSchema,
    Label,
    LabeledCorpus,
    load_corpus,
    make_fewshot_split,
    split_manifest,
)
from .ensemble import (
    average_probs,
    load_prediction_matrix,
    majority_vote,
    read_prediction_cache,
    topn_fusion,
    write_prediction_cache,
)
from .evaluation import confusion, metrics, render_report, report_record
from .gateway import (
    HashEmbedder,
    HashMaskModel,
    StubTemplateGenerator,
    load_checkpoint,
    save_checkpoint,
)
from .prompting import Template, TemplateOrigin, Verbalizer
from .template_search import GatewayBundle, SearchConfig, run_search

CACHE_DIR_ENV = "CAUSALPROMPT_CACHE_DIR"


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _rel(path: str | Path, out: Path) -> str:
    """Paths inside manifests are stored relative to the manifest's directory
    so reruns into a different output root stay byte-identical."""
    return os.path.relpath(str(path), str(out))


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        loaded = yaml.safe_load(fh)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ValueError(f"config file {path} must hold a mapping at top level")
    return loaded


def _pick(flag_value: Any, cfg: dict, dotted: str, default: Any = None, required: bool = False) -> Any:
    """Flag value if given, else the dotted config key, else the default."""
    if flag_value is not None:
        return flag_value
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            node = None
            break
        node = node[part]
    if node is not None:
        return node
    if required:
        raise ValueError(f"missing required setting {dotted!r} (flag or config)")
    return default


def _schema(args: argparse.Namespace, cfg: dict) -> ColumnSchema:
    return ColumnSchema(
        text=_pick(getattr(args, "text_col", None), cfg, "corpus.text_column", "text"),
        label=_pick(getattr(args, "label_col", None), cfg, "corpus.label_column", "label"),
        id=_pick(getattr(args, "id_col", None), cfg, "corpus.id_column"),
    )


def _cache_dir(spec: dict) -> str | None:
    return os.environ.get(CACHE_DIR_ENV) or spec.get("cache_dir")


def _oracle_from(corpus: LabeledCorpus) -> dict[str, Label]:
    return {inst.text: inst.label for inst in corpus}


def _build_mask_model(spec: dict, oracle: dict[str, Label] | None) -> Any:
    kind = spec.get("kind", "stub")
    if kind == "stub":
        return HashMaskModel(
            seed=spec.get("seed", 0),
            max_sequence_length=spec.get("max_sequence_length", 256),
            update_size=spec.get("update_size", 0.25),
            skill_per_step=spec.get("skill_per_step", 0.0),
            noise_scale=spec.get("noise_scale", 1.0),
            oracle=oracle,
            name=spec.get("model_name", "stub-mlm"),
        )
    if kind == "mlm":
        from .hf import HFMaskModel

        return HFMaskModel(
            model_name=spec["model_name"],
            max_sequence_length=spec.get("max_sequence_length", 512),
            device=spec.get("device"),
            cache_dir=_cache_dir(spec),
        )
    raise ValueError(f"unknown mask-model kind {kind!r}")


def _build_embedder(spec: dict | None) -> Any:
    if spec is None:
        return None
    kind = spec.get("kind", "stub")
    if kind == "stub":
        return HashEmbedder(dim=spec.get("dim", 16), seed=spec.get("seed", 0))
    if kind == "embedder":
        from .hf import HFSentenceEmbedder

        return HFSentenceEmbedder(model_name=spec["model_name"], cache_dir=_cache_dir(spec))
    raise ValueError(f"unknown embedder kind {kind!r}")


def _build_generator(spec: dict) -> Any:
    kind = spec.get("kind", "stub")
    if kind == "stub":
        decodes = spec.get("decodes")
        if not decodes:
            raise ValueError("stub generator config needs a 'decodes' list")
        entries = [tuple(d) if isinstance(d, (list, tuple)) else d for d in decodes]
        return StubTemplateGenerator(entries)
    if kind == "generator":
        from .hf import HFTemplateGenerator

        return HFTemplateGenerator(model_name=spec["model_name"], cache_dir=_cache_dir(spec))
    raise ValueError(f"unknown generator kind {kind!r}")


def _verbalizer(args: argparse.Namespace, cfg: dict) -> Verbalizer:
    return Verbalizer(
        word_positive=_pick(getattr(args, "word_positive", None), cfg, "verbalizer.positive", "causal"),
        word_negative=_pick(getattr(args, "word_negative", None), cfg, "verbalizer.negative", "random"),
    )


def _config_digest(resolved: dict) -> str:
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()


class FileStageStore:
    """Stage persistence for resumable searches.

    A stage file is honoured only when its recorded config digest matches the
    current resolved configuration, so stale stages never leak across runs.
    """

    def __init__(self, directory: Path, digest: str) -> None:
        self.directory = directory
        self.digest = digest

    def _path(self, stage: str) -> Path:
        return self.directory / f"stage_{stage}.json"

    def load(self, stage: str) -> dict | None:
        path = self._path(stage)
        if not path.is_file():
            return None
        record = json.loads(path.read_text(encoding="utf-8"))
        if record.get("config_digest") != self.digest:
            return None
        return record["payload"]

    def save(self, stage: str, payload: dict) -> None:
        _write_json(self._path(stage), {"config_digest": self.digest, "payload": payload})


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_split(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    corpus_path = _pick(args.corpus, cfg, "corpus.train", required=True)
    corpus = load_corpus(corpus_path, _schema(args, cfg))
    seed = _pick(args.seed, cfg, "seed", 0)
    split = make_fewshot_split(corpus, args.k, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with FileLock(out / ".lock"):
        manifest = split_manifest(split, corpus)
        manifest["config"] = {
            "command": "split",
            "corpus": _rel(corpus_path, out),
            "k": args.k,
            "seed": seed,
        }
        manifest["inputs"] = {_rel(corpus_path, out): _sha256_file(corpus_path)}
        _write_json(out / "split.json", manifest)
    print(
        f"split: |train|={len(split.train)} |eval|={len(split.eval)} "
        f"(k={args.k}, seed={seed}) -> {out / 'split.json'}"
    )
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    train_path = _pick(None, cfg, "corpus.train", required=True)
    dev_path = _pick(None, cfg, "corpus.dev", required=True)
    schema = _schema(args, cfg)
    corpus = load_corpus(train_path, schema)
    dev = load_corpus(dev_path, schema)
    verbalizer = _verbalizer(args, cfg)
    seed = _pick(args.seed, cfg, "seed", 0)
    k = _pick(args.k, cfg, "search.k", required=True)
    beam_width = _pick(args.beam, cfg, "search.beam_width", 100)
    train_cfg = cfg.get("train", {})
    betas = train_cfg.get("betas", [0.9, 0.999])
    search_config = SearchConfig(
        m=_pick(args.m, cfg, "search.m", 256),
        rank_d=_pick(None, cfg, "search.rank_d", 1),
        finalist_count=_pick(None, cfg, "search.finalists", 10),
        seed=seed,
        seeds_per_template=_pick(None, cfg, "search.seeds_per_template", 1),
        train=TrainConfig(
            learning_rate=train_cfg.get("learning_rate", 1e-5),
            betas=(float(betas[0]), float(betas[1])),
            epsilon=train_cfg.get("epsilon", 1e-8),
            weight_decay=train_cfg.get("weight_decay", 0.0),
            max_steps=train_cfg.get("max_steps", 1000),
            eval_every=train_cfg.get("eval_every", 100),
            batch_size=train_cfg.get("batch_size", 8),
            seed=train_cfg.get("seed", seed),
        ),
        eval_d=_pick(None, cfg, "search.eval_d", 1),
        eval_subsample=_pick(None, cfg, "search.eval_subsample"),
        demo_fraction=_pick(None, cfg, "search.demo_fraction", 0.5),
        demos_in_training=_pick(None, cfg, "search.demos_in_training", True),
    )
    gateways_cfg = cfg.get("gateways", {})
    mlm_spec = gateways_cfg.get("mlm", {"kind": "stub"})
    oracle = _oracle_from(corpus) if mlm_spec.get("oracle_from") == "train" else None
    gateways = GatewayBundle(
        mlm=_build_mask_model(mlm_spec, oracle),
        embedder=_build_embedder(gateways_cfg.get("embedder")),
        generator=_build_generator(_pick(None, cfg, "gateways.generator", required=True)),
    )
    out = Path(args.out)
    resolved = {
        "command": "search",
        "corpus": {"train": _rel(train_path, out), "dev": _rel(dev_path, out)},
        "verbalizer": {"positive": verbalizer.word_positive, "negative": verbalizer.word_negative},
        "seed": seed,
        "k": k,
        "beam_width": beam_width,
        "search": {
            "m": search_config.m,
            "rank_d": search_config.rank_d,
            "finalists": search_config.finalist_count,
            "seeds_per_template": search_config.seeds_per_template,
            "eval_d": search_config.eval_d,
            "eval_subsample": search_config.eval_subsample,
            "demo_fraction": search_config.demo_fraction,
            "demos_in_training": search_config.demos_in_training,
        },
        "train": {
            "learning_rate": search_config.train.learning_rate,
            "betas": list(search_config.train.betas),
            "epsilon": search_config.train.epsilon,
            "weight_decay": search_config.train.weight_decay,
            "max_steps": search_config.train.max_steps,
            "eval_every": search_config.train.eval_every,
            "batch_size": search_config.train.batch_size,
            "seed": search_config.train.seed,
        },
        "gateways": gateways_cfg,
        "inputs": {
            _rel(train_path, out): _sha256_file(train_path),
            _rel(dev_path, out): _sha256_file(dev_path),
        },
    }
    out.mkdir(parents=True, exist_ok=True)
    with FileLock(out / ".lock"):
        store = FileStageStore(out, _config_digest(resolved))
        result = run_search(
            corpus, dev, k, verbalizer, gateways, beam_width, search_config, store=store
        )
        finalist_rows = []
        for i, finalist in enumerate(result.finalists):
            checkpoint_dir = out / "checkpoints" / f"finalist_{i:02d}"
            save_checkpoint(
                checkpoint_dir,
                finalist.snapshot,
                {
                    "step": None,
                    "dev_f1": finalist.dev_f1,
                    "eval_f1": finalist.eval_f1,
                    "template": finalist.template.pattern,
                    "verbalizer": {
                        "positive": verbalizer.word_positive,
                        "negative": verbalizer.word_negative,
                    },
                    "seed": finalist.train_seed,
                },
            )
            finalist_rows.append(
                {
                    "index": i,
                    "pattern": finalist.template.pattern,
                    "eval_f1": finalist.eval_f1,
                    "dev_f1": finalist.dev_f1,
                    "checkpoint": str(Path("checkpoints") / f"finalist_{i:02d}"),
                }
            )
        _write_json(
            out / "search.json",
            {
                "config": resolved,
                "provenance": result.provenance,
                "finalists": finalist_rows,
                "selected": result.selected,
                "selected_pattern": result.selected_finalist.template.pattern,
                "selected_dev_f1": result.selected_finalist.dev_f1,
            },
        )
    print(
        f"search: {len(result.finalists)} finalists; selected "
        f"{result.selected_finalist.template.pattern!r} "
        f"(dev F1 {result.selected_finalist.dev_f1:.4f}) -> {out / 'search.json'}"
    )
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    checkpoint_manifest: dict = {}
    snapshot = None
    if args.checkpoint:
        snapshot, checkpoint_manifest = load_checkpoint(args.checkpoint)
    corpus_path = _pick(args.corpus, cfg, "classify.corpus", required=True)
    schema = _schema(args, cfg)
    corpus = load_corpus(corpus_path, schema)
    pattern = args.template or checkpoint_manifest.get("template") or _pick(
        None, cfg, "classify.template", required=True
    )
    template = Template(pattern, origin=TemplateOrigin.MANUAL)
    checkpoint_words = checkpoint_manifest.get("verbalizer", {})
    verbalizer = Verbalizer(
        word_positive=args.word_positive
        or checkpoint_words.get("positive")
        or _pick(None, cfg, "verbalizer.positive", "causal"),
        word_negative=args.word_negative
        or checkpoint_words.get("negative")
        or _pick(None, cfg, "verbalizer.negative", "random"),
    )
    seed = _pick(args.seed, cfg, "seed", 0)
    d = _pick(args.d, cfg, "classify.d", 1)
    out = Path(args.out)
    mlm_spec = cfg.get("gateways", {}).get("mlm", {"kind": "stub"})
    pool = None
    inputs = {_rel(corpus_path, out): _sha256_file(corpus_path)}
    pool_path = _pick(args.pool, cfg, "classify.pool")
    if pool_path:
        pool = load_corpus(pool_path, schema)
        inputs[_rel(pool_path, out)] = _sha256_file(pool_path)
    oracle_source = mlm_spec.get("oracle_from")
    oracle = None
    if oracle_source == "corpus":
        oracle = _oracle_from(corpus)
    elif oracle_source == "pool":
        if pool is None:
            raise ValueError("oracle_from: pool requires a demonstration pool")
        oracle = _oracle_from(pool)
    gateway = _build_mask_model(mlm_spec, oracle)
    if snapshot is not None:
        gateway.restore(snapshot)
        state_file = Path(args.checkpoint) / "state.json"
        inputs[_rel(state_file, out)] = _sha256_file(state_file)
    embedder = _build_embedder(cfg.get("gateways", {}).get("embedder")) if pool else None
    if pool is not None and embedder is None:
        embedder = HashEmbedder()
    model_id = args.model_id or f"{gateway.descriptor.model_name}:d{d}"
    predictions = classify_corpus(
        corpus, template, verbalizer, gateway,
        pool=pool, embedder=embedder, d=d,
        demo_fraction=_pick(None, cfg, "classify.demo_fraction", 0.5),
        seed=seed,
    )
    out.mkdir(parents=True, exist_ok=True)
    with FileLock(out / ".lock"):
        cache_path = out / "predictions.jsonl"
        write_prediction_cache(cache_path, model_id, predictions)
        _write_json(
            out / "classify.json",
            {
                "config": {
                    "command": "classify",
                    "corpus": _rel(corpus_path, out),
                    "pool": _rel(pool_path, out) if pool_path else None,
                    "template": template.pattern,
                    "verbalizer": {
                        "positive": verbalizer.word_positive,
                        "negative": verbalizer.word_negative,
                    },
                    "d": d,
                    "seed": seed,
                    "model_id": model_id,
                    "checkpoint": _rel(args.checkpoint, out) if args.checkpoint else None,
                },
                "inputs": inputs,
                "instances": len(predictions),
                "positive_rate": float(
                    np.mean([p.predicted_label is Label.POSITIVE for p in predictions])
                ),
            },
        )
    print(f"classify: {len(predictions)} predictions as {model_id!r} -> {cache_path}")
    return 0


def cmd_fuse(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    gold_path = _pick(args.gold, cfg, "fuse.gold", required=True)
    gold = load_corpus(gold_path, _schema(args, cfg))
    out = Path(args.out)
    inputs = {_rel(p, out): _sha256_file(p) for p in args.caches}
    inputs[_rel(gold_path, out)] = _sha256_file(gold_path)
    out.mkdir(parents=True, exist_ok=True)
    if args.vote:
        merged: dict[str, dict[str, tuple[float, float]]] = {}
        for path in args.caches:
            for model, rows in read_prediction_cache(path).items():
                if model in merged:
                    raise ValueError(f"model id {model!r} appears in more than one cache")
                merged[model] = rows
        model_ids = sorted(merged)
        if len(model_ids) % 2 == 0:
            raise ValueError(
                f"majority voting needs an odd number of models, got {len(model_ids)}"
            )
        instance_ids = list(gold.ids())
        vectors = []
        for model in model_ids:
            rows = merged[model]
            missing = set(instance_ids) - rows.keys()
            if missing:
                raise ValueError(f"cache for {model!r} missing ids {sorted(missing)[:5]}")
            vectors.append(
                [int(rows[i][0] >= rows[i][1]) for i in instance_ids]  # tie -> positive
            )
        labels = majority_vote(vectors)
        shares = np.mean(np.asarray(vectors, dtype=float), axis=0)
        with FileLock(out / ".lock"):
            vote_path = out / "vote.jsonl"
            with vote_path.open("w", encoding="utf-8") as fh:
                for instance_id, share in zip(instance_ids, shares):
                    fh.write(
                        json.dumps(
                            {
                                "model_id": "majority-vote",
                                "instance_id": instance_id,
                                "p_positive": float(share),
                                "p_negative": float(1.0 - share),
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
            _write_json(
                out / "fuse.json",
                {
                    "config": {
                        "command": "fuse",
                        "mode": "vote",
                        "caches": [_rel(p, out) for p in args.caches],
                        "gold": _rel(gold_path, out),
                    },
                    "inputs": inputs,
                    "models": model_ids,
                    "positive_votes": int(np.sum(labels == int(Label.POSITIVE))),
                },
            )
        print(f"fuse: majority vote over {len(model_ids)} models -> {vote_path}")
        return 0

    restarts = _pick(args.restarts, cfg, "fuse.restarts", 10000)
    seed = _pick(args.seed, cfg, "seed", 0)
    matrix = load_prediction_matrix(args.caches, gold)
    result, records = topn_fusion(matrix, restarts, seed)
    member_indices = [matrix.model_ids.index(m) for m in result.member_ids]
    averaged, labels = average_probs(matrix, member_indices)
    with FileLock(out / ".lock"):
        fused_path = out / "fused.jsonl"
        with fused_path.open("w", encoding="utf-8") as fh:
            for i, instance_id in enumerate(matrix.instance_ids):
                fh.write(
                    json.dumps(
                        {
                            "model_id": "topn-fusion",
                            "instance_id": instance_id,
                            "p_positive": float(averaged[i, int(Label.POSITIVE)]),
                            "p_negative": float(averaged[i, int(Label.NEGATIVE)]),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        _write_json(
            out / "fuse.json",
            {
                "config": {
                    "command": "fuse",
                    "mode": "topn",
                    "caches": [_rel(p, out) for p in args.caches],
                    "gold": _rel(gold_path, out),
                    "restarts": restarts,
                    "seed": seed,
                },
                "inputs": inputs,
                "result": {
                    "member_ids": list(result.member_ids),
                    "fused_f1": result.fused_f1,
                    "seed_model": result.seed_model,
                    "restart_index": result.restart_index,
                },
                "restart_summary": {
                    "count": len(records),
                    "best_final_f1": max(r.final_f1 for r in records),
                    "mean_final_f1": float(np.mean([r.final_f1 for r in records])),
                },
            },
        )
    print(
        f"fuse: best of {restarts} restarts has {len(result.member_ids)} members, "
        f"F1 {result.fused_f1:.4f} -> {out / 'fuse.json'}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    gold = load_corpus(args.gold, _schema(args, cfg))
    cache = read_prediction_cache(args.cache)
    if len(cache) != 1:
        raise ValueError(
            f"evaluation expects a single-model cache, found models {sorted(cache)}"
        )
    (model_id, rows), = cache.items()
    gold_ids = list(gold.ids())
    missing = set(gold_ids) - rows.keys()
    extra = rows.keys() - set(gold_ids)
    if missing or extra:
        raise ValueError(
            f"cache/gold id mismatch: missing {sorted(missing)[:10]}, extra {sorted(extra)[:10]}"
        )
    predicted = [
        Label.POSITIVE if rows[i][0] >= rows[i][1] else Label.NEGATIVE for i in gold_ids
    ]
    report = metrics(confusion(predicted, gold.labels()))
    print(render_report(report, title=f"evaluation of {model_id!r}"))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with FileLock(out / ".lock"):
            _write_json(
                out / "eval.json",
                {
                    "config": {
                        "command": "eval",
                        "cache": _rel(args.cache, out),
                        "gold": _rel(args.gold, out),
                        "model_id": model_id,
                    },
                    "inputs": {
                        _rel(args.cache, out): _sha256_file(args.cache),
                        _rel(args.gold, out): _sha256_file(args.gold),
                    },
                    "report": report_record(report),
                },
            )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_corpus_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--text-col", help="name of the text column")
    parser.add_argument("--label-col", help="name of the label column")
    parser.add_argument("--id-col", help="name of the id column (row index when absent)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalprompt",
        description="Few-shot prompt-based causal relation classification toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="build a deterministic few-shot split")
    p.add_argument("--corpus", help="corpus file (csv/tsv with header)")
    _add_corpus_flags(p)
    p.add_argument("--k", type=int, required=True, help="instances per class in train")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("search", help="generate, rank, fine-tune and select templates")
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int, help="ranking subset size per class")
    p.add_argument("--beam", type=int, help="beam width / candidate cap")
    p.add_argument("--seed", type=int)
    p.add_argument("--word-positive")
    p.add_argument("--word-negative")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("classify", help="write a prediction cache for a corpus")
    p.add_argument("--corpus", help="corpus file to classify")
    _add_corpus_flags(p)
    p.add_argument("--checkpoint", help="checkpoint directory from a search run")
    p.add_argument("--template", help="template pattern (overrides checkpoint)")
    p.add_argument("--word-positive")
    p.add_argument("--word-negative")
    p.add_argument("--pool", help="demonstration pool corpus file")
    p.add_argument("--d", type=int, help="prompts to ensemble per instance")
    p.add_argument("--seed", type=int)
    p.add_argument("--model-id")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("fuse", help="combine prediction caches")
    p.add_argument("--caches", nargs="+", required=True, help="prediction cache files")
    p.add_argument("--gold", help="gold corpus file for the fusion objective")
    _add_corpus_flags(p)
    p.add_argument("--restarts", type=int, help="number of random restarts")
    p.add_argument("--seed", type=int)
    p.add_argument("--vote", action="store_true", help="majority vote instead of TOP-N fusion")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score a prediction cache against gold labels")
    p.add_argument("--cache", required=True)
    p.add_argument("--gold", required=True)
    _add_corpus_flags(p)
    p.add_argument("--config")
    p.add_argument("--out", help="optional directory for the JSON report")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
