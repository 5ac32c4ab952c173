"""Causal transformer over [image tokens, depth tokens, text tokens]."""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import torch
from torch import nn

from affordmap.basic import ValidationError
from affordmap.model.config import ModelConfig
from affordmap.model.layers import Block, FeatureTokens, causal_mask


__all__ = ["LanguageModel", "SEGMENTS"]


logger = logging.getLogger("affordmap.model.language")


SEGMENTS = {"image": 0, "depth": 1, "text": 2}


class LanguageModel(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.token_embed = nn.Embedding(cfg.vocab_size, cfg.lm_dim)
        self.pos_embed = nn.Embedding(cfg.max_positions, cfg.lm_dim)
        self.segment_embed = nn.Embedding(len(SEGMENTS), cfg.lm_dim)
        self.blocks = nn.ModuleList([Block(cfg.lm_dim, cfg.lm_heads) for _ in range(cfg.lm_layers)])
        self.norm = nn.LayerNorm(cfg.lm_dim)
        self.head = nn.Linear(cfg.lm_dim, cfg.vocab_size, bias=False)

    def _tag(self, x: torch.Tensor, start: int, segment: str) -> torch.Tensor:
        positions = torch.arange(start, start + x.shape[1], device=x.device)
        seg = torch.full_like(positions, SEGMENTS[segment])
        return x + self.pos_embed(positions) + self.segment_embed(seg)

    def embed_text(self, text_ids: torch.Tensor) -> FeatureTokens:
        return FeatureTokens(self.token_embed(text_ids), "text")

    def forward(
        self,
        f_img: FeatureTokens,
        f_depth: Optional[FeatureTokens],
        f_text: FeatureTokens,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (logits at text positions, hidden states at every position)."""
        parts = [f_img] + ([f_depth] if f_depth is not None else []) + [f_text]
        for part in parts:
            if part.width != self.cfg.lm_dim:
                raise ValidationError(
                    f"{part.modality} tokens have width {part.width}, language model expects {self.cfg.lm_dim}."
                )
        if f_img.modality != "image" or (f_depth is not None and f_depth.modality != "depth"):
            raise ValidationError("Visual tokens must be image tokens followed by depth tokens.")
        n_img = f_img.count
        n_text = f_text.count
        if n_img + n_text > self.cfg.max_positions:
            raise ValidationError(
                f"Sequence of {n_img} visual and {n_text} text positions exceeds max_positions "
                f"{self.cfg.max_positions}."
            )

        # Depth tokens reuse the image positions; the segment embedding tells them apart.
        seq = [self._tag(f_img.tokens, 0, "image")]
        if f_depth is not None:
            seq.append(self._tag(f_depth.tokens, 0, "depth"))
        seq.append(self._tag(f_text.tokens, n_img, "text"))
        x = torch.cat(seq, dim=1)
        mask = causal_mask(x.shape[1], x.device)
        for block in self.blocks:
            x = block(x, mask=mask)
        hidden = self.norm(x)
        logits = self.head(hidden[:, -n_text:])
        return logits, hidden
