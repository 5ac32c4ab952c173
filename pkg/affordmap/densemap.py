"""Dense affordance maps and the primitives every other module builds on.

A :class:`DenseMap` holds a non-negative, finite 2D grid. Predictions and
ground truth share this type; the metrics module expects both to be brought
to the same resolution with :func:`resize_bilinear` and turned into
distributions with :func:`normalize_to_distribution`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence, Tuple, Union

import numba
import numpy as np

from affordmap.basic import DegenerateMapError, ValidationError, check_finite


__all__ = [
    "DenseMap", "normalize_to_distribution", "minmax_normalize",
    "resize_bilinear", "uniform_map",
]


logger = logging.getLogger("affordmap.densemap")


ArrayLike = Union[np.ndarray, Sequence[Sequence[float]]]


@dataclass(frozen=True, eq=False)
class DenseMap:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ValidationError(f"DenseMap needs a 2D grid, got rank {values.ndim}.")
        if values.size < 1:
            raise ValidationError("DenseMap must have at least one pixel.")
        check_finite(values, "DenseMap")
        if np.any(values < 0):
            raise ValidationError("DenseMap values must be non-negative.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values: ArrayLike) -> "DenseMap":
        return cls(np.asarray(values, dtype=np.float64))

    def to_array(self) -> np.ndarray:
        return self.values.copy()

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, DenseMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return f"DenseMap({self.height}x{self.width}, total={self.total:.6g})"


def normalize_to_distribution(dmap: DenseMap) -> DenseMap:
    total = dmap.values.sum()
    if not total > 0:
        raise DegenerateMapError(
            f"Cannot normalize a degenerate {dmap.height}x{dmap.width} map (all zeros)."
        )
    return DenseMap(dmap.values / total)


def minmax_normalize(dmap: DenseMap) -> DenseMap:
    lo = dmap.values.min()
    hi = dmap.values.max()
    if hi - lo <= 0:
        # Constant maps go to zeros so they score poorly downstream.
        return DenseMap(np.zeros_like(dmap.values))
    out = (dmap.values - lo) / (hi - lo)
    return DenseMap(np.clip(out, 0.0, 1.0))


@numba.njit
def _bilinear_align_corners(src: np.ndarray, out: np.ndarray) -> None:  # type: ignore
    H, W = src.shape
    h, w = out.shape
    for i in range(h):
        if h > 1:
            y = i * (H - 1) / (h - 1)
        else:
            y = 0.0
        y0 = int(np.floor(y))
        if y0 > H - 1:
            y0 = H - 1
        y1 = min(y0 + 1, H - 1)
        ty = y - y0
        for j in range(w):
            if w > 1:
                x = j * (W - 1) / (w - 1)
            else:
                x = 0.0
            x0 = int(np.floor(x))
            if x0 > W - 1:
                x0 = W - 1
            x1 = min(x0 + 1, W - 1)
            tx = x - x0
            # v0 + (v1 - v0) * t keeps constant inputs exact.
            top = src[y0, x0] + (src[y0, x1] - src[y0, x0]) * tx
            bottom = src[y1, x0] + (src[y1, x1] - src[y1, x0]) * tx
            val = top + (bottom - top) * ty
            out[i, j] = val if val > 0.0 else 0.0


def resize_bilinear(dmap: DenseMap, h: int, w: int) -> DenseMap:
    """Resample with bilinear interpolation, corners aligned.

    Output pixel ``i`` samples the source at ``i * (H - 1) / (h - 1)``, so the
    first and last rows/columns of input and output coincide.
    """
    if h < 1 or w < 1:
        raise ValidationError(f"Target size must be positive, got {h}x{w}.")
    if (h, w) == dmap.shape:
        return dmap
    out = np.empty((h, w), dtype=np.float64)
    _bilinear_align_corners(np.ascontiguousarray(dmap.values), out)
    logger.debug("Resized map %sx%s -> %sx%s", dmap.height, dmap.width, h, w)
    return DenseMap(out)


def uniform_map(h: int, w: int) -> DenseMap:
    return DenseMap(np.full((h, w), 1.0 / (h * w)))
