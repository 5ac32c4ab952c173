# type: ignore

import os

import numpy as np
import pytest
from PIL import Image

from affordmap.model import ModelConfig


SLOW = os.environ.get("AFFORDMAP_SLOW_TESTS", "") == "1"

slow = pytest.mark.skipif(not SLOW, reason="set AFFORDMAP_SLOW_TESTS=1 to run")


def _write_rgb(path, rng, size=(20, 24)):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    data = (rng.random((*size, 3)) * 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def _write_gt(path, rng, size=(20, 24)):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    data = np.zeros(size, dtype=np.uint8)
    r, c = rng.integers(2, size[0] - 4), rng.integers(2, size[1] - 4)
    data[r:r + 3, c:c + 3] = 255
    Image.fromarray(data).save(path)


def _write_depth(path, rng, size=(20, 24)):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    data = (rng.random(size) * 65535).astype(np.uint16)
    Image.fromarray(data).save(path)


@pytest.fixture
def agd20k_root(tmp_path):
    """A tiny AGD20K tree using classes of the canonical easy split.

    train: hold/hammer (2 images), cut_with/scissors (1), hold/zebra (unknown class)
    test:  hold/knife (2 images), hold/cup (1 image, no annotation)
    """
    rng = np.random.default_rng(0)
    root = tmp_path / "agd20k"
    layout = {
        "train": [("hold", "hammer", "h1"), ("hold", "hammer", "h2"),
                  ("cut_with", "scissors", "s1"), ("hold", "zebra", "z1")],
        "test": [("hold", "knife", "k1"), ("hold", "knife", "k2"), ("hold", "cup", "c1")],
    }
    for role, items in layout.items():
        for action, obj, stem in items:
            _write_rgb(str(root / role / action / obj / f"{stem}.jpg"), rng)
            _write_depth(str(root / "depth" / role / action / obj / f"{stem}.png"), rng)
            if obj != "cup":
                _write_gt(str(root / "annotations" / action / obj / f"{stem}.png"), rng)
    return root


@pytest.fixture
def tiny_config():
    return ModelConfig.tiny()
