"""Query-conditioned mask decoder.

A single query vector and the grid of image tokens exchange information in
a few two-way attention blocks. The refined image tokens are folded back to
their grid, upsampled with transposed convolutions, and dotted with a
hypernetwork projection of the query to produce one logit per output pixel.
"""
from __future__ import annotations

import logging

import torch
from torch import nn

from affordmap.basic import ValidationError
from affordmap.model.config import ModelConfig
from affordmap.model.layers import Attention, FeatureTokens, MLP, MaskQuery


__all__ = ["MaskDecoder", "TwoWayBlock", "PROB_EPS"]


logger = logging.getLogger("affordmap.model.decoder")


# Maps are clamped to [PROB_EPS, 1 - PROB_EPS] so they never touch 0 or 1.
PROB_EPS = 1e-6


class TwoWayBlock(nn.Module):
    def __init__(self, dim: int, heads: int) -> None:
        super().__init__()
        self.query_to_image = Attention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.query_mlp = MLP(dim, dim * 2)
        self.norm2 = nn.LayerNorm(dim)
        self.image_to_query = Attention(dim, heads)
        self.norm3 = nn.LayerNorm(dim)
        self.image_mlp = MLP(dim, dim * 2)
        self.norm4 = nn.LayerNorm(dim)

    def forward(self, query: torch.Tensor, image: torch.Tensor, image_pos: torch.Tensor):  # type: ignore
        query = self.norm1(query + self.query_to_image(query, context=image + image_pos))
        query = self.norm2(query + self.query_mlp(query))
        image = self.norm3(image + self.image_to_query(image + image_pos, context=query))
        image = self.norm4(image + self.image_mlp(image))
        return query, image


class MaskDecoder(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        dim = cfg.decoder_dim
        self.image_in = nn.Linear(cfg.lm_dim, dim)
        self.image_pos = nn.Parameter(torch.randn(1, cfg.num_grouped, dim) * 0.02)
        self.blocks = nn.ModuleList([TwoWayBlock(dim, cfg.decoder_heads) for _ in range(cfg.decoder_blocks)])
        self.final_attn = Attention(dim, cfg.decoder_heads)
        self.final_norm = nn.LayerNorm(dim)

        stages = []
        channels = dim
        strides = cfg.upsample_strides()
        for i, stride in enumerate(strides):
            out = dim // 2 ** (i + 1)
            stages.append(nn.ConvTranspose2d(channels, out, kernel_size=stride, stride=stride))
            if i < len(strides) - 1:
                stages.append(nn.GroupNorm(1, out))
            stages.append(nn.GELU())
            channels = out
        self.upscale = nn.Sequential(*stages)
        self.hypernet = MLP(dim, dim, out_dim=channels)

    def forward(self, f_img: FeatureTokens, q: MaskQuery) -> torch.Tensor:
        """Probability maps of shape (batch, map_size, map_size)."""
        if f_img.modality != "image":
            raise ValidationError(f"The mask decoder reads image tokens, got {f_img.modality} tokens.")
        if f_img.spatial_shape != self.cfg.grouped_shape:
            raise ValidationError(
                f"Image tokens laid out as {f_img.spatial_shape}, decoder expects {self.cfg.grouped_shape}."
            )
        image = self.image_in(f_img.tokens)
        query = q.vector.unsqueeze(1)
        for block in self.blocks:
            query, image = block(query, image, self.image_pos)
        query = self.final_norm(query + self.final_attn(query, context=image + self.image_pos))

        rows, cols = f_img.spatial_shape
        b, _, c = image.shape
        grid = image.transpose(1, 2).reshape(b, c, rows, cols)
        upscaled = self.upscale(grid)
        weights = self.hypernet(query[:, 0])
        logits = torch.einsum("bc,bchw->bhw", weights, upscaled)
        return torch.sigmoid(logits).clamp(PROB_EPS, 1 - PROB_EPS)
