"""Hugging Face backends for the gateway protocols.

Optional: requires the ``hf`` extra (torch, transformers,
sentence-transformers) and locally available model weights.  Everything the
pipeline needs from the pretrained models flows through the same three
protocols the stubs implement, so these classes contain no task logic.
"""

from __future__ import annotations

import copy
from typing import Sequence

import numpy as np

from .gateway import GatewayDescriptor, GatewayKind, MaskLogits, OptimizerState
from .prompting import MASK_SLOT


def _require_torch():
    try:
        import torch
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise ImportError("the 'hf' extra (torch, transformers) is required") from exc
    return torch


class HFMaskModel:
    """Masked-LM scoring and fine-tuning via transformers.

    Accepts a model name or an already constructed (tokenizer, model) pair;
    the latter keeps tests independent of downloaded weights.
    """

    def __init__(
        self,
        model_name: str | None = None,
        max_sequence_length: int = 512,
        device: str | None = None,
        cache_dir: str | None = None,
        tokenizer=None,
        model=None,
    ) -> None:
        torch = _require_torch()
        if tokenizer is None or model is None:
            from transformers import AutoModelForMaskedLM, AutoTokenizer

            tokenizer = AutoTokenizer.from_pretrained(model_name, cache_dir=cache_dir)
            model = AutoModelForMaskedLM.from_pretrained(model_name, cache_dir=cache_dir)
        self.tokenizer = tokenizer
        self.model = model
        self.device = torch.device(device or "cpu")
        self.model.to(self.device)
        self.model.eval()
        self.descriptor = GatewayDescriptor(
            GatewayKind.MLM,
            model_name or getattr(model.config, "name_or_path", "hf-mlm"),
            max_sequence_length,
            device=str(self.device),
            cache_dir=cache_dir,
        )

    # -- vocabulary ---------------------------------------------------------
    def vocab_id(self, word: str) -> int | None:
        """Id of ``word`` iff it encodes to a single non-special unit.

        BPE vocabularies usually need the word-initial space variant for a
        mid-sentence position, so that form is probed first.  Words that fall
        back to the unknown token (or any special token) are rejected rather
        than silently mis-bound.
        """
        if " " in word:
            return None
        special = set(self.tokenizer.all_special_ids)
        for candidate in (" " + word, word):
            ids = self.tokenizer.encode(candidate, add_special_tokens=False)
            if len(ids) == 1 and int(ids[0]) not in special:
                return int(ids[0])
        return None

    def _encode(self, text: str):
        return self.tokenizer(
            text.replace(MASK_SLOT, self.tokenizer.mask_token),
            return_tensors="pt",
            truncation=False,
        )

    def encoded_length(self, text: str) -> int:
        return int(self._encode(text).input_ids.shape[1])

    # -- scoring ------------------------------------------------------------
    def mask_logits(self, prompt_text: str) -> MaskLogits:
        torch = _require_torch()
        encoded = self._encode(prompt_text)
        mask_positions = (encoded.input_ids[0] == self.tokenizer.mask_token_id).nonzero()
        if mask_positions.shape[0] != 1:
            raise ValueError(
                f"prompt must contain exactly one {MASK_SLOT!r}, found {mask_positions.shape[0]}"
            )
        if encoded.input_ids.shape[1] > self.descriptor.max_sequence_length:
            raise ValueError(
                f"prompt encodes to {encoded.input_ids.shape[1]} tokens, over the "
                f"gateway maximum {self.descriptor.max_sequence_length}"
            )
        mask_index = int(mask_positions[0, 0])
        with torch.no_grad():
            logits = self.model(**{k: v.to(self.device) for k, v in encoded.items()}).logits
        return MaskLogits(
            scores=logits[0, mask_index].detach().cpu().numpy().astype(float),
            mask_index=mask_index,
        )

    # -- training -----------------------------------------------------------
    def fine_tune_step(
        self, batch: Sequence[tuple[str, int]], state: OptimizerState, config
    ) -> tuple[OptimizerState, float]:
        torch = _require_torch()
        if not batch:
            raise ValueError("empty fine-tune batch")
        if state.binding is None:
            raise ValueError("optimizer state carries no verbalizer binding")
        if state.payload is None:
            state.payload = torch.optim.AdamW(
                self.model.parameters(),
                lr=config.learning_rate,
                betas=config.betas,
                eps=config.epsilon,
                weight_decay=config.weight_decay,
            )
        optimizer = state.payload
        bound = torch.tensor(list(state.binding), device=self.device)
        self.model.train()
        losses = []
        optimizer.zero_grad()
        for prompt_text, target in batch:
            encoded = self._encode(prompt_text)
            mask_positions = (encoded.input_ids[0] == self.tokenizer.mask_token_id).nonzero()
            if mask_positions.shape[0] != 1:
                raise ValueError("every training prompt needs exactly one mask")
            logits = self.model(
                **{k: v.to(self.device) for k, v in encoded.items()}
            ).logits[0, int(mask_positions[0, 0])]
            restricted = logits[bound]
            target_pos = 0 if target == state.binding[0] else 1
            loss = torch.nn.functional.cross_entropy(
                restricted.unsqueeze(0),
                torch.tensor([target_pos], device=self.device),
            )
            losses.append(loss)
        total = torch.stack(losses).mean()
        if not torch.isfinite(total):
            raise ValueError(f"non-finite training loss {float(total)!r}")
        total.backward()
        optimizer.step()
        self.model.eval()
        state.step += 1
        return state, float(total.detach())

    # -- checkpointing ------------------------------------------------------
    def snapshot(self) -> dict:
        return {
            "weights": copy.deepcopy(
                {k: v.detach().cpu() for k, v in self.model.state_dict().items()}
            )
        }

    def restore(self, snapshot: dict) -> None:
        self.model.load_state_dict(snapshot["weights"])
        self.model.to(self.device)


class HFSentenceEmbedder:
    """Unit-norm sentence embeddings via sentence-transformers."""

    def __init__(self, model_name: str, cache_dir: str | None = None, device: str | None = None):
        from sentence_transformers import SentenceTransformer

        self.model = SentenceTransformer(model_name, cache_folder=cache_dir, device=device)
        self.descriptor = GatewayDescriptor(GatewayKind.EMBEDDER, model_name, cache_dir=cache_dir)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        vector = self.model.encode([text], normalize_embeddings=True)[0]
        return np.asarray(vector, dtype=float)


class HFTemplateGenerator:
    """Template candidates from a T5-style span-infilling model.

    Each conditioning input ``{text}<P>{word}<S>`` maps to the sentinel form
    T5 expects; decoded span pairs are stitched back into template patterns
    with the input and mask placeholders re-inserted.
    """

    def __init__(
        self,
        model_name: str,
        cache_dir: str | None = None,
        device: str | None = None,
        max_new_tokens: int = 24,
    ) -> None:
        torch = _require_torch()
        from transformers import AutoTokenizer, T5ForConditionalGeneration

        self.tokenizer = AutoTokenizer.from_pretrained(model_name, cache_dir=cache_dir)
        self.model = T5ForConditionalGeneration.from_pretrained(model_name, cache_dir=cache_dir)
        self.device = torch.device(device or "cpu")
        self.model.to(self.device)
        self.model.eval()
        self.max_new_tokens = max_new_tokens
        self.descriptor = GatewayDescriptor(
            GatewayKind.GENERATOR, model_name, cache_dir=cache_dir, device=str(self.device)
        )

    @staticmethod
    def parse_spans(decoded: str) -> tuple[str, str] | None:
        """Extract the two generated spans from a sentinel-delimited decode."""
        first, second = "<extra_id_0>", "<extra_id_1>"
        if first not in decoded:
            return None
        after_first = decoded.split(first, 1)[1]
        if second in after_first:
            prefix, rest = after_first.split(second, 1)
            suffix = rest.split("<extra_id_2>", 1)[0]
        else:
            prefix, suffix = after_first, ""
        return prefix.rstrip(), suffix.rstrip()

    def generate(self, filled_inputs: Sequence[str], beam_width: int) -> list[tuple[str, float]]:
        torch = _require_torch()
        if not filled_inputs:
            raise ValueError("no generation inputs")
        out: list[tuple[str, float]] = []
        for text in filled_inputs:
            if "<P>" not in text or "<S>" not in text:
                raise ValueError(f"generation input lacks <P>/<S> slots: {text!r}")
            prepared = text.replace("<P>", "<extra_id_0>").replace("<S>", "<extra_id_1>")
            encoded = self.tokenizer(prepared, return_tensors="pt").to(self.device)
            with torch.no_grad():
                result = self.model.generate(
                    **encoded,
                    num_beams=beam_width,
                    num_return_sequences=beam_width,
                    max_new_tokens=self.max_new_tokens,
                    output_scores=True,
                    return_dict_in_generate=True,
                )
            scores = result.sequences_scores.tolist() if result.sequences_scores is not None else []
            for i, sequence in enumerate(result.sequences):
                decoded = self.tokenizer.decode(sequence, skip_special_tokens=False)
                spans = self.parse_spans(decoded)
                if spans is None:
                    continue
                prefix, suffix = spans
                pattern = f"[x]{prefix} {MASK_SLOT}{suffix}".replace("  ", " ")
                score = float(scores[i]) if i < len(scores) else 0.0
                out.append((pattern, score))
        return out
