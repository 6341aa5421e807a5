"""
Ensemble fusion and evaluation
==============================

TOP-N fusion greedily grows an ensemble from a random seed model, keeping a
shuffled candidate only when the averaged-probability F1 strictly improves,
and repeats the whole process over many independent restarts.  Majority
voting is the simple odd-count alternative.
"""

# %%
# A synthetic prediction matrix over 6 instances: models A and B make
# complementary mistakes, model C is confidently wrong; averaging A and B
# fixes every error, which no single model can.

import numpy as np

from causalprompt import PredictionMatrix

gold = np.array([1, 1, 1, 0, 0, 0])
p_pos = np.array([
    [0.9, 0.4, 0.4, 0.1, 0.1, 0.1],   # A errs on instances 1 and 2
    [0.9, 0.9, 0.9, 0.6, 0.6, 0.1],   # B errs on instances 3 and 4
    [0.9, 0.05, 0.05, 0.95, 0.95, 0.1],  # C errs on all four, confidently
])
probs = np.stack([1.0 - p_pos, p_pos], axis=2)
matrix = PredictionMatrix(
    model_ids=["A", "B", "C"],
    instance_ids=[f"i{j}" for j in range(6)],
    probs=probs,
    gold=gold,
)

# %%
# Fuse with 1000 restarts; the best restart finds the {A, B} pair.

from causalprompt import average_probs, topn_fusion

result, records = topn_fusion(matrix, restarts=1000, seed=7)
print("members:", result.member_ids, "fused F1:", result.fused_f1)
print("found at restart", result.restart_index, "seeded by", result.seed_model)

final_f1s = [r.final_f1 for r in records]
print(f"restart final F1s: min={min(final_f1s):.3f} mean={np.mean(final_f1s):.3f} "
      f"max={max(final_f1s):.3f}")

averaged, labels = average_probs(matrix, [matrix.model_ids.index(m) for m in result.member_ids])
print("fused labels:", labels.tolist(), "gold:", gold.tolist())

# %%
# Majority voting needs an odd number of aligned label vectors.

from causalprompt import majority_vote

votes = [(matrix.probs[j, :, 1] >= matrix.probs[j, :, 0]).astype(int) for j in range(3)]
print("\nper-model votes:", [v.tolist() for v in votes])
print("majority:", majority_vote(votes).tolist())

# %%
# Confusion-matrix metrics, with the causal class as positive.

from causalprompt import confusion, metrics
from causalprompt.evaluation import render_report

report = metrics(confusion(labels, gold))
print()
print(render_report(report, title="fused ensemble on the toy matrix"))

# %%
# The consistency checker flags (P, R, F1) rows where F1 is not the
# harmonic mean of P and R, in percentage points.

from causalprompt import consistency_check

rows = [(85.49, 92.70, 88.95), (50.0, 50.0, 60.0)]
print("\nconsistency deviations (pp):",
      [round(d, 4) for d in consistency_check(rows)])
