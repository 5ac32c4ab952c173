"""Training objectives.

``L = L_aff + lambda_text * L_text`` where ``L_aff`` is a soft-target binary
focal loss over the affordance map and ``L_text`` the cross entropy of the
answer tokens. Each loss exists twice: a numpy reference operating on
:class:`~affordmap.densemap.DenseMap` / arrays (with closed-form gradients),
and a torch version used by the trainer.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from affordmap.basic import ValidationError, check_same_shape
from affordmap.densemap import DenseMap
from affordmap.symbolic import make_focal_gradient


__all__ = [
    "LossWeights", "focal_affordance_loss", "focal_affordance_grad", "text_loss",
    "text_loss_grad", "total_loss", "focal_loss_torch", "text_loss_torch",
    "PROB_CLAMP",
]


logger = logging.getLogger("affordmap.losses")


PROB_CLAMP = 1e-6


@dataclass(frozen=True)
class LossWeights:
    alpha_pos: float = 0.95
    alpha_neg: float = 0.05
    gamma: float = 2.0
    lambda_text: float = 0.01
    hard_threshold: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0 < self.alpha_pos < 1:
            raise ValidationError(f"alpha_pos must be in (0, 1), got {self.alpha_pos}.")
        if not 0 < self.alpha_neg < 1:
            raise ValidationError(f"alpha_neg must be in (0, 1), got {self.alpha_neg}.")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}.")
        if self.lambda_text < 0:
            raise ValidationError(f"lambda_text must be >= 0, got {self.lambda_text}.")
        if self.hard_threshold is not None and not 0 < self.hard_threshold <= 1:
            raise ValidationError("hard_threshold must be in (0, 1].")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _targets(gt: np.ndarray, w: LossWeights) -> np.ndarray:
    if w.hard_threshold is not None:
        return (gt >= w.hard_threshold).astype(np.float64)
    return gt


def focal_affordance_loss(pred_prob: DenseMap, gt: DenseMap, w: LossWeights = LossWeights()) -> float:
    check_same_shape(pred_prob.shape, gt.shape, "prediction and target")
    if np.any(gt.values > 1):
        raise ValidationError("Focal loss targets must lie in [0, 1].")
    p = np.clip(pred_prob.values, PROB_CLAMP, 1 - PROB_CLAMP)
    y = _targets(gt.values, w)
    pixel = (
        w.alpha_pos * y * (1 - p) ** w.gamma * -np.log(p)
        + w.alpha_neg * (1 - y) * p ** w.gamma * -np.log(1 - p)
    )
    return float(pixel.mean())


def focal_affordance_grad(pred_prob: DenseMap, gt: DenseMap, w: LossWeights = LossWeights()) -> np.ndarray:
    """Gradient of :func:`focal_affordance_loss` with respect to ``pred_prob``.

    Zero where the clamp is active.
    """
    check_same_shape(pred_prob.shape, gt.shape, "prediction and target")
    raw = pred_prob.values
    p = np.clip(raw, PROB_CLAMP, 1 - PROB_CLAMP)
    y = _targets(gt.values, w)
    grad = make_focal_gradient()(p, y, w.alpha_pos, w.alpha_neg, w.gamma) / raw.size
    inside = (raw > PROB_CLAMP) & (raw < 1 - PROB_CLAMP)
    return np.where(inside, grad, 0.0)


def _scored_positions(n: int, ignore_positions: Iterable[int]) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    for pos in ignore_positions:
        if not 0 <= pos < n:
            raise ValidationError(f"Ignored position {pos} out of range for length {n}.")
        mask[pos] = False
    if not mask.any():
        raise ValidationError("text_loss: every position is ignored.")
    return mask


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def text_loss(
    logits: np.ndarray, targets: Sequence[int], ignore_positions: Iterable[int] = ()
) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ValidationError(
            f"logits {logits.shape} do not line up with {targets.shape[0]} targets."
        )
    mask = _scored_positions(len(targets), ignore_positions)
    logp = _log_softmax(logits)
    nll = -logp[np.arange(len(targets)), targets]
    return float(nll[mask].mean())


def text_loss_grad(
    logits: np.ndarray, targets: Sequence[int], ignore_positions: Iterable[int] = ()
) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    mask = _scored_positions(len(targets), ignore_positions)
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(len(targets)), targets] -= 1.0
    probs[~mask] = 0.0
    return probs / mask.sum()


def total_loss(l_aff: float, l_text: float, w: LossWeights = LossWeights()) -> float:
    return l_aff + w.lambda_text * l_text


def focal_loss_torch(pred_prob: torch.Tensor, gt: torch.Tensor, w: LossWeights) -> torch.Tensor:
    """Mean soft-target focal loss over all pixels of a batch of maps."""
    if pred_prob.shape != gt.shape:
        raise ValidationError(f"Shape mismatch: {tuple(pred_prob.shape)} vs {tuple(gt.shape)}.")
    p = pred_prob.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    y = gt
    if w.hard_threshold is not None:
        y = (gt >= w.hard_threshold).to(p.dtype)
    pixel = (
        w.alpha_pos * y * (1 - p) ** w.gamma * -torch.log(p)
        + w.alpha_neg * (1 - y) * p ** w.gamma * -torch.log1p(-p)
    )
    return pixel.mean()


def text_loss_torch(logits: torch.Tensor, targets: torch.Tensor, ignore: torch.Tensor) -> torch.Tensor:
    """Cross entropy averaged over positions where ``ignore`` is False.

    ``logits`` is (batch, length, vocab), ``targets`` and ``ignore`` are
    (batch, length).
    """
    keep = ~ignore
    if not bool(keep.any()):
        raise ValidationError("text_loss: every position is ignored.")
    return F.cross_entropy(logits[keep], targets[keep])
