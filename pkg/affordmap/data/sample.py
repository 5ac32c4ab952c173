from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from typing_extensions import Literal

from affordmap.basic import DatasetError, ShapeMismatchError
from affordmap.densemap import DenseMap


__all__ = ["Sample", "Role"]


Role = Literal["train", "test"]


@dataclass(eq=False)
class Sample:
    sample_id: str
    image: np.ndarray
    object_name: str
    action_name: str
    gt_map: DenseMap
    split_role: str = "train"
    depth: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[-1] != 3:
            raise ShapeMismatchError(f"{self.sample_id}: image must be HxWx3, got {self.image.shape}.")
        if self.depth is not None and self.depth.shape != self.image.shape[:2]:
            raise ShapeMismatchError(
                f"{self.sample_id}: depth {self.depth.shape} does not match image {self.image.shape[:2]}."
            )
        if self.split_role not in ("train", "test"):
            raise DatasetError(f"{self.sample_id}: unknown split role '{self.split_role}'.")
        if self.split_role == "train" and not self.gt_map.total > 0:
            raise DatasetError(f"{self.sample_id}: training sample with an all-zero ground truth map.")

    @property
    def file_stem(self) -> str:
        """``sample_id`` made safe for use as a flat file name."""
        return self.sample_id.replace("/", "__")
