"""Transformer building blocks shared by the encoder, language model and decoder.

Attention is written out explicitly (no fused kernels) so results are
reproducible across devices and float64 gradient checks see the same graph
as training.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from torch import nn

from affordmap.basic import ValidationError


__all__ = ["Attention", "MLP", "Block", "FeatureTokens", "MaskQuery", "causal_mask"]


MODALITIES = ("image", "depth", "text")


@dataclass
class FeatureTokens:
    """A batch of token sequences of one modality, shape (batch, tokens, width)."""
    tokens: torch.Tensor
    modality: str
    spatial_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.modality not in MODALITIES:
            raise ValidationError(f"Unknown modality '{self.modality}'.")
        if self.tokens.dim() != 3:
            raise ValidationError(f"Tokens must be (batch, tokens, width), got {tuple(self.tokens.shape)}.")
        if self.modality in ("image", "depth"):
            if self.spatial_shape is None:
                raise ValidationError(f"{self.modality} tokens need a spatial_shape.")
            rows, cols = self.spatial_shape
            if rows * cols != self.tokens.shape[1]:
                raise ValidationError(
                    f"spatial_shape {self.spatial_shape} does not cover {self.tokens.shape[1]} tokens."
                )

    @property
    def count(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def width(self) -> int:
        return int(self.tokens.shape[2])


@dataclass
class MaskQuery:
    vector: torch.Tensor
    source_position: torch.Tensor

    def __post_init__(self) -> None:
        if not bool(torch.isfinite(self.vector).all()):
            raise ValidationError("Mask query is not finite.")


def causal_mask(n: int, device: torch.device) -> torch.Tensor:
    """True where attention is blocked (key after query)."""
    return torch.triu(torch.ones(n, n, dtype=torch.bool, device=device), diagonal=1)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int, kv_dim: Optional[int] = None) -> None:
        super().__init__()
        kv_dim = dim if kv_dim is None else kv_dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(kv_dim, dim)
        self.v = nn.Linear(kv_dim, dim)
        self.out = nn.Linear(dim, dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.heads, self.head_dim).transpose(1, 2)

    def forward(
        self, x: torch.Tensor, context: Optional[torch.Tensor] = None,
        mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        context = x if context is None else context
        q = self._split(self.q(x))
        k = self._split(self.k(context))
        v = self._split(self.v(context))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        b, _, n, _ = q.shape
        mixed = (weights @ v).transpose(1, 2).reshape(b, n, self.heads * self.head_dim)
        return self.out(mixed)


class MLP(nn.Module):
    def __init__(self, dim: int, hidden: int, out_dim: Optional[int] = None) -> None:
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim if out_dim is None else out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int = 4) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLP(dim, dim * mlp_ratio)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), mask=mask)
        return x + self.mlp(self.norm2(x))
