"""
Prompts, demonstrations and mask scoring
========================================

A template turns a sentence into a prompt with one mask slot; a verbalizer
maps the two classes to label words.  The class probability is a softmax
over just those two words' scores at the mask position, and d
demonstration-augmented prompts can be ensembled by averaging their
label-word logits before the softmax.
"""

# %%
# Templates hold one input slot and one mask slot, literally substituted.

from causalprompt import Template, Verbalizer, fill_mask, instantiate
from causalprompt.corpus import Label, LabeledInstance

template = Template("[x] This is not [MASK]")
verbalizer = Verbalizer(word_positive="causal", word_negative="random")
x = LabeledInstance("q", "Soldiers were hurt in the attacks", Label.POSITIVE)

print("input prompt:", instantiate(template, x))
print("filled negative:", fill_mask(template, verbalizer.word_negative))

# a mask glued to a suffix still scores a standalone mask token
glued = Template("[x] There were no [MASK]ities in this")
print("glued fill:", fill_mask(glued, "causal"))

# %%
# Demonstrations are answered prompts appended after the input prompt: one
# per class, sampled from the most similar training sentences.

from pathlib import Path

from causalprompt import ColumnSchema, build_prompt_bundle, embed_corpus, load_corpus, sample_demonstrations
from causalprompt.gateway import HashEmbedder

pool = load_corpus(Path(__file__).parent / "data" / "toy_train.csv", ColumnSchema(id="rid"))
embedder = HashEmbedder(dim=16, seed=1)
embeddings = embed_corpus(embedder, pool)
embeddings[x.text] = embedder.embed(x.text)

demos = sample_demonstrations(x, pool, embeddings, fraction=0.5, seed=5)
bundle = build_prompt_bundle(template, verbalizer, x, demos)
print("\nfull prompt:")
print(" ", bundle.full_text)
print("mask position:", bundle.mask_position_hint)

# %%
# The stub gateway scores prompts deterministically, so the whole pipeline
# runs without any pretrained model; real backends implement the same
# protocol.

from causalprompt import bind_verbalizer, restricted_softmax
from causalprompt.gateway import HashMaskModel

gateway = HashMaskModel(seed=11)
binding = bind_verbalizer(gateway, verbalizer)
logits = gateway.mask_logits(bundle.full_text)
probs = restricted_softmax(logits, binding)
print(f"\np(causal) = {probs.p_positive:.4f}  p(random) = {probs.p_negative:.4f}")

# %%
# classify() builds d prompts with independently sampled demonstrations and
# averages the label-word logits before the softmax.

from causalprompt import classify

prediction, pairs = classify(
    x, template, verbalizer, gateway,
    pool=pool, embeddings=embeddings, d=3, seed=21,
)
print("\nd=3 logit pairs:", [(round(a, 3), round(b, 3)) for a, b in pairs])
print("prediction:", prediction.predicted_label.name,
      f"(p={prediction.probabilities.p_positive:.4f})")
