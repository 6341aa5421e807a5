from __future__ import annotations

import math

import numpy as np
import pytest

from causalprompt.classifier import (
    BaselineConfig,
    ClassProbabilities,
    Prediction,
    TrainConfig,
    baseline_finetune,
    classify,
    classify_corpus,
    finetune_prompt_model,
    linear_schedule,
    restricted_softmax,
    softmax_pair,
)
from causalprompt.corpus import Label, LabeledCorpus, LabeledInstance, make_fewshot_split
from causalprompt.gateway import (
    DEFAULT_VOCABULARY,
    GatewayDescriptor,
    GatewayKind,
    HashEmbedder,
    HashMaskModel,
    HashSequenceClassifier,
    MaskLogits,
    TableMaskModel,
    bind_verbalizer,
    tokenize_with_mask,
)
from causalprompt.prompting import Template, Verbalizer, instantiate

from conftest import build_corpus
from helpers import SequencedMaskModel, scores_with

VERB = Verbalizer("causal", "random")
SIGMOID = lambda z: 1.0 / (1.0 + math.exp(-z))


class TestProbabilities:
    def test_sum_enforced(self):
        with pytest.raises(ValueError, match="sum to 1"):
            ClassProbabilities(0.7, 0.4)

    def test_range_enforced(self):
        with pytest.raises(ValueError, match="out of range"):
            ClassProbabilities(1.4, -0.4)

    def test_tie_predicts_positive(self):
        assert ClassProbabilities(0.5, 0.5).label() is Label.POSITIVE

    def test_prediction_argmax_coherence(self):
        probs = ClassProbabilities(0.2, 0.8)
        with pytest.raises(ValueError, match="argmax"):
            Prediction("i", probs, Label.POSITIVE)
        assert Prediction.from_probabilities("i", probs).predicted_label is Label.NEGATIVE


class TestTrainConfig:
    def test_eval_every_bounded_by_max_steps(self):
        with pytest.raises(ValueError, match="eval_every"):
            TrainConfig(max_steps=10, eval_every=20)

    def test_positivity(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestRestrictedSoftmax:
    def binding(self, gw):
        return bind_verbalizer(gw, VERB)

    def test_equal_scores_split_evenly(self):
        gw = TableMaskModel({"p [MASK]": scores_with(2.0, 2.0, base=9.0)})
        probs = restricted_softmax(gw.mask_logits("p [MASK]"), self.binding(gw))
        assert probs.p_positive == probs.p_negative == 0.5

    def test_unit_gap_closed_form(self):
        # independent oracle: p = e / (1 + e) for a one-unit logit gap
        gw = TableMaskModel({"p [MASK]": scores_with(1.0, 0.0, base=5.0)})
        probs = restricted_softmax(gw.mask_logits("p [MASK]"), self.binding(gw))
        expected = math.e / (1.0 + math.e)
        assert probs.p_positive == pytest.approx(expected, abs=1e-12)
        assert probs.p_positive == pytest.approx(0.731059, abs=1e-6)

    def test_other_vocabulary_entries_ignored(self):
        quiet = scores_with(1.3, -0.2, base=0.0)
        loud = scores_with(1.3, -0.2, base=77.0)  # every other entry huge
        gw = TableMaskModel({"a [MASK]": quiet, "b [MASK]": loud})
        binding = self.binding(gw)
        a = restricted_softmax(gw.mask_logits("a [MASK]"), binding)
        b = restricted_softmax(gw.mask_logits("b [MASK]"), binding)
        assert a == b

    def test_uniform_shift_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            pos, neg, shift = rng.uniform(-40, 40, 3)
            base = softmax_pair(pos, neg)
            shifted = softmax_pair(pos + shift, neg + shift)
            assert abs(base.p_positive - shifted.p_positive) < 1e-9
            assert abs(base.p_positive + base.p_negative - 1.0) < 1e-9

    def test_out_of_range_binding_errors(self):
        gw = TableMaskModel({"p [MASK]": scores_with(1.0, 0.0)})
        with pytest.raises(ValueError, match="outside"):
            restricted_softmax(gw.mask_logits("p [MASK]"), (0, 10_000))

    def test_non_finite_scores_rejected_at_construction(self):
        with pytest.raises(ValueError, match="finite"):
            MaskLogits(np.array([np.nan, 1.0]), 0)


class TestClassify:
    def test_d1_equals_direct_scoring_bit_exactly(self):
        template = Template("[x] so [MASK]")
        x = LabeledInstance("q", "it rained", Label.POSITIVE)
        gw = HashMaskModel(seed=8)
        binding = bind_verbalizer(gw, VERB)
        direct_scores = gw.mask_logits(instantiate(template, x)).scores
        direct = softmax_pair(float(direct_scores[binding[0]]), float(direct_scores[binding[1]]))
        prediction, pairs = classify(x, template, VERB, gw, d=1)
        assert prediction.probabilities == direct
        assert pairs == [(float(direct_scores[binding[0]]), float(direct_scores[binding[1]]))]

    def test_d3_identical_logits_match_closed_form(self):
        gw = SequencedMaskModel([scores_with(1.0, 0.0)] * 3)
        x = LabeledInstance("q", "text here", Label.POSITIVE)
        prediction, pairs = classify(x, Template("[x] so [MASK]"), VERB, gw, d=3)
        assert pairs == [(1.0, 0.0)] * 3
        assert prediction.probabilities.p_positive == pytest.approx(
            math.e / (1.0 + math.e), abs=1e-12
        )

    def test_d2_opposite_logits_tie_goes_positive(self):
        gw = SequencedMaskModel([scores_with(2.0, 0.0), scores_with(0.0, 2.0)])
        x = LabeledInstance("q", "text here", Label.POSITIVE)
        prediction, pairs = classify(x, Template("[x] so [MASK]"), VERB, gw, d=2)
        assert pairs == [(2.0, 0.0), (0.0, 2.0)]
        assert prediction.probabilities == ClassProbabilities(0.5, 0.5)
        assert prediction.predicted_label is Label.POSITIVE

    def test_logit_averaging_differs_from_probability_averaging(self):
        # witness pair (2,0)/(0,1): the schemes disagree, so they cannot be
        # silently swapped; computed via independent sigmoid closed forms
        gw = SequencedMaskModel([scores_with(2.0, 0.0), scores_with(0.0, 1.0)])
        x = LabeledInstance("q", "text here", Label.POSITIVE)
        prediction, _ = classify(x, Template("[x] so [MASK]"), VERB, gw, d=2)
        logit_avg = SIGMOID((2.0 + 0.0) / 2 - (0.0 + 1.0) / 2)
        prob_avg = (SIGMOID(2.0 - 0.0) + SIGMOID(0.0 - 1.0)) / 2
        assert prediction.probabilities.p_positive == pytest.approx(logit_avg, abs=1e-12)
        assert abs(logit_avg - prob_avg) > 0.04

    def test_requires_positive_d(self):
        gw = HashMaskModel()
        x = LabeledInstance("q", "text", Label.POSITIVE)
        with pytest.raises(ValueError, match="d must be"):
            classify(x, Template("[x] [MASK]"), VERB, gw, d=0)

    def test_demo_pool_requires_embedder_or_embeddings(self):
        gw = HashMaskModel()
        pool = build_corpus(2, 2)
        x = LabeledInstance("q", "text", Label.POSITIVE)
        with pytest.raises(ValueError, match="embedder"):
            classify(x, Template("[x] [MASK]"), VERB, gw, pool=pool)

    def test_seeded_reproducibility_with_demos(self):
        gw = HashMaskModel(seed=3)
        pool = build_corpus(4, 4)
        embedder = HashEmbedder(seed=5)
        x = LabeledInstance("q", "an unseen sentence", Label.POSITIVE)
        template = Template("[x] so [MASK]")
        a = classify(x, template, VERB, gw, pool=pool, embedder=embedder, d=3, seed=21)
        b = classify(x, template, VERB, gw, pool=pool, embedder=embedder, d=3, seed=21)
        c = classify(x, template, VERB, gw, pool=pool, embedder=embedder, d=3, seed=22)
        assert a == b
        assert a != c

    def test_classify_corpus_stable_under_reordering(self):
        gw = HashMaskModel(seed=3)
        corpus = build_corpus(3, 3)
        template = Template("[x] so [MASK]")
        forward = classify_corpus(corpus, template, VERB, gw, seed=9)
        reversed_corpus = LabeledCorpus(tuple(reversed(corpus.instances)), "rev")
        backward = classify_corpus(reversed_corpus, template, VERB, gw, seed=9)
        by_id = {p.instance_id: p for p in backward}
        assert all(by_id[p.instance_id] == p for p in forward)


class FakeImprovingMaskModel:
    """Scripted monotone improvement: each eval window flips one more
    negative eval sentence from wrongly-positive to correct."""

    def __init__(self, eval_corpus: LabeledCorpus, eval_every: int):
        self.descriptor = GatewayDescriptor(GatewayKind.STUB, "improving", 512)
        self._index = {w: i for i, w in enumerate(DEFAULT_VOCABULARY)}
        self.order = [inst.text for inst in eval_corpus.by_label(Label.NEGATIVE)]
        self.labels = {inst.text: inst.label for inst in eval_corpus}
        self.eval_every = eval_every
        self.steps = 0

    def vocab_id(self, word):
        return self._index.get(word) if " " not in word else None

    def encoded_length(self, text):
        return len(tokenize_with_mask(text))

    def mask_logits(self, prompt_text):
        scores = np.zeros(len(DEFAULT_VOCABULARY))
        causal, random_ = self._index["causal"], self._index["random"]
        scores[causal] = 1.0  # default: everything looks positive
        for j, text in enumerate(self.order):
            if text in prompt_text and self.steps >= (j + 2) * self.eval_every:
                scores[causal], scores[random_] = 0.0, 1.0
        return MaskLogits(scores, 0)

    def fine_tune_step(self, batch, state, config):
        if not batch:
            raise ValueError("empty batch")
        self.steps += 1
        state.step += 1
        return state, 1.0 / self.steps

    def snapshot(self):
        return {"steps": self.steps}

    def restore(self, snapshot):
        self.steps = snapshot["steps"]


class TestFinetunePromptModel:
    def make_split(self, n=10, k=3):
        return make_fewshot_split(build_corpus(n, n), k, seed=4)

    def config(self, **kw):
        defaults = dict(max_steps=40, eval_every=4, batch_size=4, seed=2)
        defaults.update(kw)
        return TrainConfig(**defaults)

    def test_eval_event_count(self):
        gw = HashMaskModel(seed=1)
        result = finetune_prompt_model(
            gw, self.make_split(), Template("[x] so [MASK]"), VERB, self.config()
        )
        assert result.eval_events == 10
        assert len(result.log) == 40

    def test_single_eval_event_when_eval_every_equals_max_steps(self):
        gw = HashMaskModel(seed=1)
        result = finetune_prompt_model(
            gw, self.make_split(), Template("[x] so [MASK]"), VERB,
            self.config(max_steps=20, eval_every=20),
        )
        assert result.eval_events == 1
        assert result.snapshot_taken

    def test_checkpoint_f1_sequence_strictly_increases(self):
        split = self.make_split()
        oracle = {inst.text: inst.label for inst in split.eval}
        gw = HashMaskModel(seed=1, skill_per_step=0.2, oracle=oracle)
        result = finetune_prompt_model(
            gw, split, Template("[x] so [MASK]"), VERB, self.config()
        )
        f1s = result.checkpoint_f1s
        assert len(f1s) >= 2
        assert all(b > a for a, b in zip(f1s, f1s[1:]))
        assert result.best_f1 == f1s[-1]

    def test_monotone_stub_checkpoints_every_eval(self):
        corpus = build_corpus(12, 12)
        split = make_fewshot_split(corpus, 2, seed=0)
        gw = FakeImprovingMaskModel(split.eval, eval_every=4)
        result = finetune_prompt_model(
            gw, split, Template("[x] so [MASK]"), VERB, self.config()
        )
        eval_records = [r for r in result.log if r.dev_f1 is not None]
        assert len(eval_records) == 10
        assert all(r.checkpointed for r in eval_records)

    def test_deterministic_logs(self):
        split = self.make_split()
        results = []
        for _ in range(2):
            gw = HashMaskModel(seed=6, skill_per_step=0.05,
                               oracle={i.text: i.label for i in split.eval})
            results.append(
                finetune_prompt_model(gw, split, Template("[x] so [MASK]"), VERB, self.config())
            )
        assert results[0].log == results[1].log
        assert results[0].best_snapshot == results[1].best_snapshot

    def test_demonstrations_refresh_each_epoch(self):
        split = self.make_split(n=6, k=3)
        seen: list[list[str]] = []

        class Recorder(HashMaskModel):
            def fine_tune_step(inner, batch, state, config):
                seen.append([text for text, _ in batch])
                return super().fine_tune_step(batch, state, config)

        gw = Recorder(seed=1)
        finetune_prompt_model(
            gw, split, Template("[x] so [MASK]"), VERB,
            self.config(max_steps=4, eval_every=4, batch_size=6),
            embedder=HashEmbedder(seed=2),
        )
        # every training prompt carries both label words from its demos
        flat = [text for batch in seen for text in batch]
        assert flat and all("causal" in t and "random" in t for t in flat)
        # 6 train instances per epoch pass, batch 6 -> one batch per epoch;
        # epochs resample, so prompts are not all identical across epochs
        assert seen[0] != seen[1] or seen[1] != seen[2]

    def test_eval_subsample(self):
        split = self.make_split(n=12, k=3)
        gw = HashMaskModel(seed=1)
        result = finetune_prompt_model(
            gw, split, Template("[x] so [MASK]"), VERB,
            self.config(max_steps=4, eval_every=4),
            eval_subsample=2,
        )
        assert result.eval_events == 1


class TestLinearSchedule:
    def test_endpoints_and_midpoint(self):
        lr_at = linear_schedule(5e-5, 200)
        assert lr_at(0) == 5e-5
        assert lr_at(200) == 0.0
        assert lr_at(100) == pytest.approx(2.5e-5, abs=1e-20)

    def test_never_negative(self):
        lr_at = linear_schedule(1e-4, 10)
        assert lr_at(15) == 0.0

    def test_requires_positive_total(self):
        with pytest.raises(ValueError):
            linear_schedule(1e-4, 0)


class TestBaselineFinetune:
    def test_step_arithmetic_partial_last_batch(self):
        train = build_corpus(50, 50)  # 100 instances
        dev = build_corpus(5, 5, prefix="d")
        gw = HashSequenceClassifier(seed=0)
        config = BaselineConfig(batch_size=32, epochs=50, seed=1)
        result = baseline_finetune(gw, train, dev, config)
        assert len(result.lr_log) == 4 * 50  # ceil(100/32) = 4 steps per epoch
        assert result.lr_log[0] == 5e-5
        assert len(result.epoch_reports) == 50

    def test_schedule_reaches_zero_only_after_last_step(self):
        train = build_corpus(4, 4)
        dev = build_corpus(2, 2, prefix="d")
        gw = HashSequenceClassifier(seed=0)
        config = BaselineConfig(batch_size=4, epochs=5, seed=1)
        result = baseline_finetune(gw, train, dev, config)
        assert all(lr > 0 for lr in result.lr_log)
        assert min(result.lr_log) == pytest.approx(5e-5 / 10, rel=1e-9)

    def test_deterministic_runs(self):
        train = build_corpus(6, 6)
        dev = build_corpus(3, 3, prefix="d")
        config = BaselineConfig(batch_size=4, epochs=3, seed=5)
        oracle = {i.text: i.label for i in dev}
        runs = [
            baseline_finetune(
                HashSequenceClassifier(seed=2, skill_per_step=0.3, oracle=oracle),
                train, dev, config,
            )
            for _ in range(2)
        ]
        assert runs[0].epoch_reports == runs[1].epoch_reports
        assert runs[0].lr_log == runs[1].lr_log

    def test_best_snapshot_tracks_best_epoch(self):
        train = build_corpus(6, 6)
        dev = build_corpus(4, 4, prefix="d")
        oracle = {i.text: i.label for i in dev}
        gw = HashSequenceClassifier(seed=2, skill_per_step=0.4, oracle=oracle)
        result = baseline_finetune(gw, train, dev, BaselineConfig(batch_size=4, epochs=4, seed=5))
        assert result.snapshot_taken
        best = max(result.epoch_reports, key=lambda r: r.dev_f1)
        assert result.best_f1 == best.dev_f1
        assert result.best_epoch == best.epoch
