"""
Corpora and deterministic splits
================================

Load a labeled corpus from delimited text, carve out a few-shot split,
sample a balanced evaluation subset, and build stratified k-folds.  Every
sampling operation is a pure function of its seed, and a split can be
written to a manifest and rebuilt bit-exactly.
"""

# %%
# Load the bundled toy corpus (comma-separated, header row).

from pathlib import Path

from causalprompt import ColumnSchema, load_corpus

DATA = Path(__file__).parent / "data"
corpus = load_corpus(DATA / "toy_train.csv", ColumnSchema(id="rid"))
n_pos, n_neg = corpus.counts
print(f"{corpus.name}: {len(corpus)} instances ({n_pos} causal / {n_neg} non-causal)")
print("first instance:", corpus[0])

# %%
# A few-shot split keeps exactly k instances per class for training and
# leaves everything else as a large evaluation set.

from causalprompt import make_fewshot_split

split = make_fewshot_split(corpus, k=4, seed=13)
print(f"k=4 -> |train|={len(split.train)}, |eval|={len(split.eval)}")
print("train ids:", split.train.ids())

# %%
# The same (corpus, k, seed) always reproduces the same split, and a
# manifest file captures it for later audits.

import tempfile

from causalprompt import load_split_manifest, write_split_manifest

assert make_fewshot_split(corpus, k=4, seed=13).train.ids() == split.train.ids()

with tempfile.TemporaryDirectory() as scratch:
    manifest_path = Path(scratch) / "split.json"
    write_split_manifest(manifest_path, split, corpus)
    reloaded = load_split_manifest(manifest_path, corpus)
    assert reloaded.train.ids() == split.train.ids()
    print("manifest round-trip ok:", manifest_path.name)

# %%
# Balanced evaluation subsets keep ranking cheap: m instances per class.

from causalprompt import sample_eval_subset

subset = sample_eval_subset(split.eval, m=3, seed=7)
print(f"subset: {len(subset)} instances, counts={subset.counts}")

# %%
# Stratified k-fold partitions for the standard fine-tuning baseline.

from causalprompt import make_kfold

for i, (train_fold, dev_fold) in enumerate(make_kfold(corpus, folds=5, seed=3)):
    print(f"fold {i}: |train|={len(train_fold)} |dev|={len(dev_fold)} dev counts={dev_fold.counts}")
