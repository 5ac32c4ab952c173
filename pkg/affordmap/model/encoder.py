from __future__ import annotations

import logging

import torch
import torch.nn.functional as F
from torch import nn

from affordmap.model.config import ModelConfig
from affordmap.model.layers import Block


__all__ = ["ImageEncoder"]


logger = logging.getLogger("affordmap.model.encoder")


class ImageEncoder(nn.Module):
    """Patch transformer over (batch, 3, H, W) images.

    The ``lowres`` variant sees the input at half resolution and repeats each
    token of its coarser grid, so it produces as many tokens as ``highres``
    while carrying less spatial detail.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.patch_embed = nn.Conv2d(3, cfg.encoder_dim, cfg.patch_size, stride=cfg.patch_size)
        self.pos_embed = nn.Parameter(torch.randn(1, cfg.num_patches, cfg.encoder_dim) * 0.02)
        self.blocks = nn.ModuleList(
            [Block(cfg.encoder_dim, cfg.encoder_heads) for _ in range(cfg.encoder_layers)]
        )
        self.norm = nn.LayerNorm(cfg.encoder_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = images
        if self.cfg.encoder_variant == "lowres":
            x = F.avg_pool2d(x, 2)
        x = self.patch_embed(x)
        if self.cfg.encoder_variant == "lowres":
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = x.flatten(2).transpose(1, 2) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        return self.norm(x)
