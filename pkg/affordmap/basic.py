from __future__ import annotations

import json
import logging
from typing import Any, Iterable, Optional, Tuple

import numpy as np


__all__ = [
    "ValidationError", "ShapeMismatchError", "DegenerateMapError",
    "NotNormalizedError", "MaskTokenError", "CheckpointError",
    "MissingEmbeddingError", "DatasetError", "TrainingError",
    "check_same_shape", "check_distribution", "check_positive",
    "check_finite", "canonical_json", "DIST_ATOL",
]


logger = logging.getLogger("affordmap.basic")


# Tolerance for "sums to 1" preconditions of the metrics.
DIST_ATOL = 1e-6


class ValidationError(ValueError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class DegenerateMapError(ValidationError):
    pass


class NotNormalizedError(ValidationError):
    pass


class MaskTokenError(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass


class DatasetError(ValidationError):
    pass


class MissingEmbeddingError(ValidationError):
    def __init__(self, class_name: str) -> None:
        super().__init__(f"No embedding for class '{class_name}'.")
        self.class_name = class_name


class TrainingError(RuntimeError):
    def __init__(self, msg: str, sample_ids: Optional[Iterable[str]] = None) -> None:
        self.sample_ids = list(sample_ids) if sample_ids is not None else []
        if self.sample_ids:
            msg = "%s (batch: %s)" % (msg, ", ".join(self.sample_ids))
        super().__init__(msg)


def check_same_shape(a: Tuple[int, ...], b: Tuple[int, ...], what: str = "maps") -> None:
    if tuple(a) != tuple(b):
        raise ShapeMismatchError(f"Shape mismatch between {what}: {tuple(a)} vs {tuple(b)}.")


def check_distribution(values: np.ndarray, name: str, atol: float = DIST_ATOL) -> None:
    total = float(values.sum())
    if abs(total - 1.0) > atol:
        raise NotNormalizedError(
            f"{name} must sum to 1 (got {total:.9g}); "
            "call normalize_to_distribution first."
        )


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ValidationError(f"{name} must be positive, got {value}.")
    return value


def check_finite(values: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{name} contains non-finite values.")
    return values


def canonical_json(data: Any) -> str:
    """Sorted keys, compact separators, non-ASCII kept; equal data gives equal text."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
