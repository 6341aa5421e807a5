"""
Automatic template search
=========================

The search pipeline: build a few-shot split, condition a generator on the
training instances to propose candidate templates, rank all candidates
zero-shot on a small balanced subset, fine-tune the shortlist, and select
the finalist with the best F1 on the held-out dev corpus.

Stub gateways make the walk-through fast and deterministic; the stub mask
model carries a label oracle so fine-tuning visibly improves its scores.
"""

# %%
# Inputs: toy corpora and a canned candidate pool for the stub generator.

from pathlib import Path

from causalprompt import ColumnSchema, TrainConfig, Verbalizer, load_corpus
from causalprompt.gateway import HashEmbedder, HashMaskModel, StubTemplateGenerator

DATA = Path(__file__).parent / "data"
schema = ColumnSchema(id="rid")
corpus = load_corpus(DATA / "toy_train.csv", schema)
dev = load_corpus(DATA / "toy_dev.csv", schema)
verbalizer = Verbalizer("causal", "random")

decodes = [
    "[x] This is not [MASK]",
    "[x] There were no [MASK]ities in this",
    "[x] The incident is not [MASK]",
    "[x] It was [MASK]",
    "[x] That seems [MASK]",
    "[x] Officials called it [MASK]",
    "[x] The report was [MASK]",
    "[x] Purely [MASK]",
    "[x] In short, [MASK]",
    "[x] Verdict: [MASK]",
    "[x] The link is [MASK]",
    "[x] Entirely [MASK]",
]

oracle = {inst.text: inst.label for inst in corpus}
gateways = dict(
    mlm=HashMaskModel(seed=3, skill_per_step=0.05, oracle=oracle),
    embedder=HashEmbedder(dim=16, seed=4),
    generator=StubTemplateGenerator(decodes),
)

# %%
# The generator is conditioned on each training instance with its label
# word framed by the two generation slots.

from causalprompt import GatewayBundle, build_generation_inputs, make_fewshot_split

split = make_fewshot_split(corpus, k=4, seed=13)
inputs = build_generation_inputs(split.train, verbalizer)
print("generator input:", inputs[0])

# %%
# Run the whole search: 12 candidates in, top-10 fine-tuned, one selected.

from causalprompt import SearchConfig, run_search

config = SearchConfig(
    m=3,
    seed=13,
    train=TrainConfig(max_steps=20, eval_every=5, batch_size=4, seed=5),
)
result = run_search(corpus, dev, 4, verbalizer, GatewayBundle(**gateways), 100, config)

print("\nzero-shot ranking (top 5):")
for row in result.provenance["ranking"][:5]:
    print(f"  #{row['rank']:2d}  f1={row['zero_shot_f1']:.3f}  {row['pattern']}")

print("\nfinalists:")
for i, finalist in enumerate(result.finalists):
    marker = "*" if i == result.selected else " "
    print(f" {marker} eval_f1={finalist.eval_f1:.3f} dev_f1={finalist.dev_f1:.3f}  "
          f"{finalist.template.pattern}")

print("\nselected:", result.selected_finalist.template.pattern,
      f"(dev F1 {result.selected_finalist.dev_f1:.3f})")
