"""Reading and writing dense maps.

Two formats are supported:

* single channel 16-bit PNG; values are min-max normalized on save and
  rescaled to [0, 1] on load, so the absolute scale is lost.
* the lossless ``.afmp`` sidecar: an 8 byte header (magic ``AFMP``, u16
  height, u16 width, little endian) followed by little endian float32 values
  in row-major order.
"""
from __future__ import annotations

import logging
import os
from typing import Union

import numpy as np
from PIL import Image

from affordmap.basic import ValidationError
from affordmap.densemap import DenseMap, minmax_normalize


__all__ = [
    "save_png16", "load_png16", "save_afmp", "load_afmp", "load_map",
    "read_gray", "AFMP_MAGIC",
]


logger = logging.getLogger("affordmap.mapio")

PathLike = Union[str, "os.PathLike[str]"]

AFMP_MAGIC = b"AFMP"
AFMP_HEADER = np.dtype([("magic", "S4"), ("height", "<u2"), ("width", "<u2")])
AFMP_VALUE = np.dtype("<f4")


def save_png16(dmap: DenseMap, path: PathLike) -> None:
    scaled = minmax_normalize(dmap).values
    data = np.round(scaled * 65535.0).astype(np.uint16)
    Image.fromarray(data).save(os.fspath(path), format="PNG")


def read_gray(path: PathLike) -> np.ndarray:
    """Read a single channel image as floats in [0, 1]."""
    with Image.open(os.fspath(path)) as img:
        mode = img.mode
        if mode not in ("1", "L", "I", "I;16", "I;16B", "I;16L", "F"):
            raise ValidationError(
                f"{os.fspath(path)} is not single-channel (mode {mode})."
            )
        data = np.asarray(img)
    if mode == "F":
        return data.astype(np.float64)
    if mode in ("1", "L"):
        return data.astype(np.float64) / (1.0 if mode == "1" else 255.0)
    return data.astype(np.float64) / 65535.0


def load_png16(path: PathLike) -> DenseMap:
    values = read_gray(path)
    return DenseMap(np.clip(values, 0.0, None))


def save_afmp(dmap: DenseMap, path: PathLike) -> None:
    if dmap.height > 0xFFFF or dmap.width > 0xFFFF:
        raise ValidationError(f"Map {dmap.shape} too large for the AFMP header.")
    header = np.zeros((), dtype=AFMP_HEADER)
    header["magic"] = AFMP_MAGIC
    header["height"] = dmap.height
    header["width"] = dmap.width
    with open(os.fspath(path), "wb") as f:
        f.write(header.tobytes())
        f.write(dmap.values.astype(AFMP_VALUE).tobytes(order="C"))


def load_afmp(path: PathLike) -> DenseMap:
    with open(os.fspath(path), "rb") as f:
        raw = f.read()
    if len(raw) < AFMP_HEADER.itemsize:
        raise ValidationError(f"{os.fspath(path)}: truncated AFMP header.")
    header = np.frombuffer(raw[:AFMP_HEADER.itemsize], dtype=AFMP_HEADER)[0]
    if bytes(header["magic"]) != AFMP_MAGIC:
        raise ValidationError(f"{os.fspath(path)}: bad magic {bytes(header['magic'])!r}.")
    height, width = int(header["height"]), int(header["width"])
    body = raw[AFMP_HEADER.itemsize:]
    expected = height * width * AFMP_VALUE.itemsize
    if len(body) != expected:
        raise ValidationError(
            f"{os.fspath(path)}: expected {expected} bytes of values, found {len(body)}."
        )
    values = np.frombuffer(body, dtype=AFMP_VALUE).reshape(height, width)
    return DenseMap(values.astype(np.float64))


def load_map(path: PathLike) -> DenseMap:
    """Load a map by suffix; for a PNG path an existing ``.afmp`` twin wins."""
    path = os.fspath(path)
    stem, ext = os.path.splitext(path)
    ext = ext.lower()
    if ext == ".afmp":
        return load_afmp(path)
    if os.path.exists(stem + ".afmp"):
        logger.debug("Using float sidecar for %s", path)
        return load_afmp(stem + ".afmp")
    if ext in (".png", ".jpg", ".jpeg"):
        return load_png16(path)
    raise ValidationError(f"Unknown map format: {path}")
