"""Loader for the AGD20K directory layout.

::

    <root>/<role>/<action>/<object>/<image_id>.jpg
    <root>/annotations/<action>/<object>/<image_id>.png
    <root>/depth/<role>/<action>/<object>/<image_id>.png   (optional)

Images and depth maps are resized to a square ``image_size`` with bicubic
interpolation and scaled to [0, 1]. Ground truth stays at its native
resolution, metrics are computed there.
"""
from __future__ import annotations

import logging
import os
from typing import List, Optional, Union

import numpy as np
from PIL import Image

from affordmap.basic import DatasetError, ValidationError
from affordmap.data.sample import Sample
from affordmap.densemap import DenseMap, minmax_normalize
from affordmap.mapio import load_map, read_gray
from affordmap.splits import SplitSpec, normalize_class_name


__all__ = ["load_agd20k", "load_depth", "load_image", "IMAGE_SUFFIXES"]


logger = logging.getLogger("affordmap.data.agd20k")

PathLike = Union[str, "os.PathLike[str]"]

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


def _resize(values: np.ndarray, size: Optional[int]) -> np.ndarray:
    if size is None or values.shape[:2] == (size, size):
        return values
    if values.ndim == 2:
        img = Image.fromarray(values.astype(np.float32), mode="F")
        out = np.asarray(img.resize((size, size), Image.BICUBIC), dtype=np.float64)
    else:
        channels = [
            np.asarray(
                Image.fromarray(values[..., c].astype(np.float32), mode="F")
                .resize((size, size), Image.BICUBIC),
                dtype=np.float64,
            )
            for c in range(values.shape[-1])
        ]
        out = np.stack(channels, axis=-1)
    # Bicubic overshoots at sharp edges.
    return np.clip(out, 0.0, 1.0)


def load_image(path: PathLike, image_size: Optional[int] = None) -> np.ndarray:
    with Image.open(os.fspath(path)) as img:
        data = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return _resize(data, image_size)


def load_depth(path: PathLike, image_size: Optional[int] = None) -> np.ndarray:
    """Read a precomputed single-channel depth map, minmax-scaled to [0, 1]."""
    if not os.path.exists(os.fspath(path)):
        raise DatasetError(f"Depth file {os.fspath(path)} does not exist.")
    raw = read_gray(path)
    depth = minmax_normalize(DenseMap(np.clip(raw, 0.0, None))).values
    return _resize(depth, image_size)


def _list_dirs(path: str) -> List[str]:
    return sorted(
        name for name in os.listdir(path)
        if os.path.isdir(os.path.join(path, name)) and not name.startswith(".")
    )


def load_agd20k(
    root: PathLike,
    split: SplitSpec,
    role: str,
    image_size: Optional[int] = None,
    use_depth: bool = False,
) -> List[Sample]:
    root = os.fspath(root)
    wanted = split.side(role)
    known = split.train_classes | split.test_classes
    if not split.allow_overlap and split.train_classes & split.test_classes:
        raise ValidationError(f"Split '{split.name}' is not disjoint.")
    image_root = os.path.join(root, role)
    if not os.path.isdir(image_root):
        raise DatasetError(f"No '{role}' directory under {root}.")

    samples: List[Sample] = []
    skipped_unknown = set()
    for action in _list_dirs(image_root):
        for obj_dir in _list_dirs(os.path.join(image_root, action)):
            obj = normalize_class_name(obj_dir)
            if obj not in known:
                skipped_unknown.add(obj_dir)
                continue
            if obj not in wanted:
                continue
            folder = os.path.join(image_root, action, obj_dir)
            for fname in sorted(os.listdir(folder)):
                stem, ext = os.path.splitext(fname)
                if ext.lower() not in IMAGE_SUFFIXES:
                    continue
                sample_id = f"{action}/{obj_dir}/{stem}"
                gt_path = os.path.join(root, "annotations", action, obj_dir, stem + ".png")
                if not os.path.exists(gt_path):
                    if role == "train":
                        raise DatasetError(f"Missing ground truth for training sample {sample_id}.")
                    logger.warning("No ground truth for %s, skipping", sample_id)
                    continue
                depth = None
                if use_depth:
                    depth = load_depth(
                        os.path.join(root, "depth", role, action, obj_dir, stem + ".png"),
                        image_size,
                    )
                image = load_image(os.path.join(folder, fname), image_size)
                samples.append(Sample(
                    sample_id=sample_id,
                    image=image,
                    object_name=obj,
                    action_name=action.replace("_", " "),
                    gt_map=load_map(gt_path),
                    split_role=role,
                    depth=depth,
                ))
    for name in sorted(skipped_unknown):
        logger.warning("Class directory '%s' is in neither side of split '%s', skipped", name, split.name)
    if not samples:
        raise DatasetError(f"No {role} samples for split '{split.name}' under {root}.")
    samples.sort(key=lambda s: s.sample_id)
    logger.info("Loaded %s %s samples of split '%s' from %s", len(samples), role, split.name, root)
    return samples
