from __future__ import annotations

import dataclasses
import logging
import math
from typing import Any, Dict, Mapping, Tuple

from affordmap.basic import ValidationError


__all__ = ["ModelConfig", "from_dict_strict"]


logger = logging.getLogger("affordmap.model.config")


def from_dict_strict(cls: Any, data: Mapping[str, Any], where: str) -> Any:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValidationError(f"Unknown keys in {where}: {unknown}.")
    return cls(**data)


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    image_size: int = 96
    patch_size: int = 8
    encoder_dim: int = 64
    encoder_layers: int = 4
    encoder_heads: int = 4
    encoder_variant: str = "highres"
    projection_dim: int = 64
    group_factor: int = 4
    lm_dim: int = 256
    lm_layers: int = 4
    lm_heads: int = 4
    vocab_size: int = 512
    max_positions: int = 256
    decoder_dim: int = 64
    decoder_heads: int = 4
    decoder_blocks: int = 2
    upsample_stages: int = 2
    map_size: int = 48
    use_depth: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self) -> None:
        self.validate()

    @property
    def patch_grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.patch_grid ** 2

    @property
    def num_grouped(self) -> int:
        return self.num_patches // self.group_factor

    @property
    def group_side(self) -> int:
        """Side of the square block of neighbouring patches merged into one token."""
        return math.isqrt(self.group_factor)

    @property
    def grouped_shape(self) -> Tuple[int, int]:
        side = self.patch_grid // self.group_side
        return side, side

    @property
    def num_visual_tokens(self) -> int:
        return self.num_grouped * (2 if self.use_depth else 1)

    def upsample_strides(self) -> Tuple[Tuple[int, int], ...]:
        """Per-stage (row, col) strides taking the grouped grid to ``map_size``.

        Every stage but the last doubles the resolution; the last one makes up
        the remaining factor.
        """
        strides = []
        for axis in self.grouped_shape:
            factor = self.map_size // axis
            head = 2 ** (self.upsample_stages - 1)
            strides.append([2] * (self.upsample_stages - 1) + [factor // head])
        return tuple(zip(strides[0], strides[1]))

    def validate(self) -> None:
        positive = [
            "image_size", "patch_size", "encoder_dim", "encoder_layers", "encoder_heads",
            "projection_dim", "group_factor", "lm_dim", "lm_layers", "lm_heads",
            "max_positions", "decoder_dim", "decoder_heads", "decoder_blocks",
            "upsample_stages", "map_size",
        ]
        for name in positive:
            if getattr(self, name) < 1:
                raise ValidationError(f"ModelConfig.{name} must be positive.")
        if self.lm_dim != self.projection_dim * self.group_factor:
            raise ValidationError(
                f"lm_dim ({self.lm_dim}) must equal projection_dim × group_factor "
                f"({self.projection_dim} × {self.group_factor})."
            )
        if self.image_size % self.patch_size:
            raise ValidationError("image_size must be a multiple of patch_size.")
        if self.group_side ** 2 != self.group_factor:
            raise ValidationError(
                f"group_factor must be a square number of neighbouring patches, got {self.group_factor}."
            )
        if self.patch_grid % self.group_side:
            raise ValidationError(
                f"A {self.patch_grid}×{self.patch_grid} patch grid cannot be split into "
                f"{self.group_side}×{self.group_side} blocks."
            )
        for dim, heads, what in [
            (self.encoder_dim, self.encoder_heads, "encoder"),
            (self.lm_dim, self.lm_heads, "lm"),
            (self.decoder_dim, self.decoder_heads, "decoder"),
        ]:
            if dim % heads:
                raise ValidationError(f"{what} width {dim} is not divisible by {heads} heads.")
        if self.encoder_variant not in ("highres", "lowres"):
            raise ValidationError(f"Unknown encoder_variant '{self.encoder_variant}'.")
        if self.encoder_variant == "lowres" and (
            self.image_size % (2 * self.patch_size) or self.patch_grid % 2
        ):
            raise ValidationError("lowres encoder needs an even patch grid after pooling by 2.")
        if self.vocab_size < 6:
            raise ValidationError("vocab_size must cover the reserved tokens plus one word.")
        if self.dtype not in ("float32", "float64"):
            raise ValidationError(f"dtype must be float32 or float64, got {self.dtype}.")
        head = 2 ** (self.upsample_stages - 1)
        for axis in self.grouped_shape:
            if self.map_size % axis or (self.map_size // axis) % head:
                raise ValidationError(
                    f"map_size {self.map_size} is not reachable from a grid side of {axis} "
                    f"with {self.upsample_stages} upsampling stages."
                )
        if self.decoder_dim // 2 ** self.upsample_stages < 1:
            raise ValidationError("decoder_dim too small for the number of upsampling stages.")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelConfig":
        return from_dict_strict(cls, data, "model config")

    @classmethod
    def tiny(cls, **overrides: Any) -> "ModelConfig":
        """Smallest consistent config, used for gradient checks."""
        values: Dict[str, Any] = dict(
            image_size=16, patch_size=8, encoder_dim=8, encoder_layers=1, encoder_heads=2,
            projection_dim=8, group_factor=4, lm_dim=32, lm_layers=1, lm_heads=2,
            vocab_size=32, max_positions=32, decoder_dim=8, decoder_heads=2,
            decoder_blocks=1, upsample_stages=2, map_size=4, use_depth=True,
            dtype="float64",
        )
        values.update(overrides)
        return cls(**values)
