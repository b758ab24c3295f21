"""Local pretrained contextual sentence encoder.

Loads tokenizer and model weights from a local directory (no downloads).
Sentences are encoded by averaging the model's hidden states across all
layers (the multi-scale average) and then averaging the resulting token
vectors into one sentence vector, ignoring padding positions.
"""

from __future__ import annotations

import numpy as np


class EncoderLoadError(RuntimeError):
    pass


class SentenceEncoder:
    def __init__(self, assets_path: str, max_tokens: int = 128):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover
            raise EncoderLoadError(f"encoder backend unavailable: {exc}") from exc
        self._torch = torch
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(assets_path)
            self.model = AutoModel.from_pretrained(
                assets_path, output_hidden_states=True
            )
        except Exception as exc:
            raise EncoderLoadError(
                f"could not load encoder assets from {assets_path}: {exc}"
            ) from exc
        self.model.eval()
        self.max_tokens = max_tokens

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    def encode(self, sentences: list[str]) -> np.ndarray:
        """Sentence vectors for a batch, shape (len(sentences), dim)."""
        torch = self._torch
        batch = self.tokenizer(
            sentences,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_tokens,
        )
        with torch.no_grad():
            output = self.model(**batch)
        # (layers+1, batch, tokens, dim) -> average the scales first
        stacked = torch.stack(output.hidden_states)
        per_token = stacked.mean(dim=0)
        mask = batch["attention_mask"].unsqueeze(-1).to(per_token.dtype)
        summed = (per_token * mask).sum(dim=1)
        counts = mask.sum(dim=1).clamp(min=1.0)
        return (summed / counts).cpu().numpy().astype(np.float32)
