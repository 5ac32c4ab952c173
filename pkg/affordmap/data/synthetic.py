"""Parametric toy objects with exact affordance regions.

Each archetype is a handful of rectangles and ellipses ("parts") drawn on a
flat background. An action selects one part; the ground truth map is that
part's mask blurred with a small Gaussian. The depth map is the height field
of the parts, so depth carries the object's structure by construction.

Archetypes are split into a seen and a held-out group (see
:func:`synthetic_split`), mimicking a split where test objects share no class
with training objects.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from affordmap.basic import ValidationError
from affordmap.data.sample import Sample
from affordmap.densemap import DenseMap
from affordmap.splits import SplitSpec


__all__ = [
    "Archetype", "CATALOG", "SEEN_ARCHETYPES", "HELD_OUT_ARCHETYPES",
    "SyntheticConfig", "generate_synthetic", "render_archetype",
    "synthetic_split", "archetype_of", "corpus",
]


logger = logging.getLogger("affordmap.data.synthetic")


# (kind, cy, cx, half_h, half_w) in unit coordinates, before jitter.
Part = Tuple[str, float, float, float, float]


@dataclass(frozen=True)
class Archetype:
    name: str
    objects: Tuple[str, ...]
    parts: Dict[str, Part]
    actions: Dict[str, str]
    heights: Dict[str, float]
    colors: Dict[str, Tuple[float, float, float]]
    order: Tuple[str, ...] = field(default=())

    @property
    def draw_order(self) -> Tuple[str, ...]:
        return self.order or tuple(self.parts)


CATALOG: Dict[str, Archetype] = {a.name: a for a in [
    Archetype(
        name="handled-tool",
        objects=("hammer", "knife"),
        parts={
            "body": ("ellipse", 0.50, 0.32, 0.16, 0.20),
            "handle": ("rect", 0.50, 0.68, 0.05, 0.21),
        },
        actions={"hold": "handle", "cut": "body", "hit": "body"},
        heights={"body": 0.7, "handle": 0.45},
        colors={"body": (0.55, 0.57, 0.62), "handle": (0.55, 0.33, 0.16)},
    ),
    Archetype(
        name="seat",
        objects=("chair", "bench"),
        parts={
            "top": ("rect", 0.45, 0.50, 0.05, 0.30),
            "left_leg": ("rect", 0.65, 0.25, 0.15, 0.035),
            "right_leg": ("rect", 0.65, 0.75, 0.15, 0.035),
        },
        actions={"sit": "top", "lie": "top", "lift": "left_leg"},
        heights={"top": 0.8, "left_leg": 0.35, "right_leg": 0.35},
        colors={"top": (0.62, 0.42, 0.22), "left_leg": (0.35, 0.24, 0.12),
                "right_leg": (0.35, 0.24, 0.12)},
    ),
    Archetype(
        name="container",
        objects=("cup", "mug"),
        parts={
            "body": ("rect", 0.55, 0.45, 0.22, 0.18),
            "rim": ("rect", 0.33, 0.45, 0.035, 0.20),
            "handle": ("rect", 0.55, 0.69, 0.10, 0.05),
        },
        actions={"drink": "rim", "hold": "handle", "pour": "rim"},
        heights={"body": 0.6, "rim": 0.9, "handle": 0.5},
        colors={"body": (0.85, 0.85, 0.80), "rim": (0.95, 0.95, 0.92), "handle": (0.7, 0.7, 0.65)},
    ),
    Archetype(
        name="bottle",
        objects=("bottle", "flask"),
        parts={
            "body": ("rect", 0.62, 0.50, 0.22, 0.15),
            "neck": ("rect", 0.32, 0.50, 0.08, 0.06),
            "cap": ("rect", 0.21, 0.50, 0.035, 0.07),
        },
        actions={"pour": "neck", "hold": "body", "open": "cap"},
        heights={"body": 0.55, "neck": 0.75, "cap": 1.0},
        colors={"body": (0.25, 0.55, 0.35), "neck": (0.3, 0.6, 0.4), "cap": (0.8, 0.2, 0.2)},
    ),
    Archetype(
        name="lever-door",
        objects=("door", "cabinet"),
        parts={
            "panel": ("rect", 0.50, 0.50, 0.40, 0.25),
            "knob": ("ellipse", 0.50, 0.67, 0.05, 0.05),
        },
        actions={"open": "knob", "push": "panel"},
        heights={"panel": 0.4, "knob": 0.9},
        colors={"panel": (0.72, 0.6, 0.45), "knob": (0.9, 0.8, 0.2)},
    ),
    Archetype(
        name="ball",
        objects=("ball", "balloon"),
        parts={"ball": ("ellipse", 0.50, 0.50, 0.25, 0.25)},
        actions={"kick": "ball", "throw": "ball", "hold": "ball"},
        heights={"ball": 1.0},
        colors={"ball": (0.85, 0.35, 0.15)},
    ),
]}

SEEN_ARCHETYPES = ("handled-tool", "seat", "container")
HELD_OUT_ARCHETYPES = ("bottle", "lever-door", "ball")


def archetype_of(object_name: str) -> Archetype:
    for archetype in CATALOG.values():
        if object_name in archetype.objects:
            return archetype
    raise ValidationError(f"No synthetic archetype draws '{object_name}'.")


def _lookup(name: str) -> Archetype:
    if name not in CATALOG:
        raise ValidationError(f"Unknown archetype '{name}'; choose from {sorted(CATALOG)}.")
    return CATALOG[name]


def _part_mask(
    part: Part, yy: np.ndarray, xx: np.ndarray, scale: float, oy: float, ox: float, flip: bool
) -> np.ndarray:
    kind, cy, cx, hh, hw = part
    if flip:
        cx = 1.0 - cx
    cy = 0.5 + (cy - 0.5) * scale + oy
    cx = 0.5 + (cx - 0.5) * scale + ox
    hh, hw = hh * scale, hw * scale
    if kind == "rect":
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    return ((yy - cy) / hh) ** 2 + ((xx - cx) / hw) ** 2 <= 1.0


def render_archetype(
    name: str, action: str, rng: np.random.Generator, size: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one jittered instance; returns (image, depth, region mask)."""
    archetype = _lookup(name)
    if action not in archetype.actions:
        raise ValidationError(f"Archetype '{name}' has no rule for action '{action}'.")
    target = archetype.actions[action]

    scale = rng.uniform(0.85, 1.15)
    oy, ox = rng.uniform(-0.08, 0.08, size=2)
    flip = bool(rng.integers(2))
    centers = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(centers, centers, indexing="ij")

    background = rng.uniform(0.1, 0.3) + rng.uniform(-0.03, 0.03, size=3)
    image = np.broadcast_to(background, (size, size, 3)).copy()
    height = np.zeros((size, size))
    labels = np.full((size, size), -1, dtype=np.int64)
    order = archetype.draw_order
    for idx, part_name in enumerate(order):
        mask = _part_mask(archetype.parts[part_name], yy, xx, scale, oy, ox, flip)
        color = np.clip(np.asarray(archetype.colors[part_name]) + rng.uniform(-0.08, 0.08, 3), 0, 1)
        image[mask] = color
        height[mask] = archetype.heights[part_name]
        labels[mask] = idx

    region = labels == order.index(target)
    if not region.any():
        # Part collapsed below one pixel at this resolution.
        kind, cy, cx, _, _ = archetype.parts[target]
        cx = 1.0 - cx if flip else cx
        row = int(np.clip((0.5 + (cy - 0.5) * scale + oy) * size, 0, size - 1))
        col = int(np.clip((0.5 + (cx - 0.5) * scale + ox) * size, 0, size - 1))
        region[row, col] = True

    image = np.clip(image + rng.normal(0.0, 0.02, size=image.shape), 0.0, 1.0)
    depth = np.clip(ndimage.gaussian_filter(height, sigma=size / 96.0), 0.0, 1.0)
    return image, depth, region


def _blurred_region(region: np.ndarray, sigma: float) -> np.ndarray:
    blurred = ndimage.gaussian_filter(region.astype(np.float64), sigma=sigma, mode="constant")
    return blurred / blurred.max()


@dataclass(frozen=True)
class SyntheticConfig:
    n_samples: int
    image_size: int = 96
    class_inventory: Tuple[str, ...] = SEEN_ARCHETYPES
    seed: int = 0
    split_role: str = "train"
    use_depth: bool = True
    blur_sigma: float = 1.5

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValidationError("n_samples must be positive.")
        if self.image_size < 8:
            raise ValidationError("image_size must be at least 8.")
        if not self.class_inventory:
            raise ValidationError("class_inventory is empty.")
        for name in self.class_inventory:
            _lookup(name)


def generate_synthetic(config: SyntheticConfig) -> List[Sample]:
    """Deterministic synthetic samples; archetypes are cycled in inventory order."""
    rng = np.random.default_rng(config.seed)
    samples = []
    for i in range(config.n_samples):
        archetype = CATALOG[config.class_inventory[i % len(config.class_inventory)]]
        obj = archetype.objects[int(rng.integers(len(archetype.objects)))]
        actions = sorted(archetype.actions)
        action = actions[int(rng.integers(len(actions)))]
        image, depth, region = render_archetype(archetype.name, action, rng, config.image_size)
        gt = _blurred_region(region, config.blur_sigma * config.image_size / 96.0)
        samples.append(Sample(
            sample_id=f"syn-{config.seed}-{i:05d}",
            image=image,
            object_name=obj,
            action_name=action,
            gt_map=DenseMap(gt),
            split_role=config.split_role,
            depth=depth if config.use_depth else None,
        ))
    logger.debug("Generated %s synthetic samples from %s", len(samples), config.class_inventory)
    return samples


def synthetic_split(
    seen: Sequence[str] = SEEN_ARCHETYPES, held_out: Sequence[str] = HELD_OUT_ARCHETYPES
) -> SplitSpec:
    """Object-class split where held-out archetypes contribute only test classes."""
    train = [obj for name in seen for obj in _lookup(name).objects]
    test = [obj for name in held_out for obj in _lookup(name).objects]
    return SplitSpec("synthetic-hard", frozenset(train), frozenset(test))


def corpus(inventory: Sequence[str] = tuple(CATALOG)) -> List[Tuple[str, str]]:
    """Every (object, action) pair the catalog can produce."""
    return [
        (obj, action)
        for name in inventory
        for obj in _lookup(name).objects
        for action in sorted(_lookup(name).actions)
    ]


