"""Train/test object-class splits and how hard they are to generalize across.

The difficulty of a split is one minus the mean, over test classes, of the
cosine similarity between a test class and its closest training class::

    D = 1 - mean_{c in test} max_{c' in train} cos(e(c), e(c'))

where ``e`` is a text embedding of the class name. Although the quantity is
often described as a "distance", it has to be read as a similarity for the
``max`` and the ``1 -`` to give a score that grows as splits get harder.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from affordmap.basic import MissingEmbeddingError, ValidationError


__all__ = [
    "SplitSpec", "EmbeddingTable", "normalize_class_name", "class_similarity",
    "split_difficulty", "per_class_difficulty", "nearest_train_class",
    "build_random_split", "build_lvis_random_split", "same_split",
    "load_canonical_splits", "read_split_file", "write_split_file",
    "format_split", "parse_split", "load_embedding_table",
    "save_embedding_table", "embedding_table_from_mapping", "split_hash",
    "table_hash", "lvis_classes",
    "RESOURCE_DIR", "DEFAULT_EMBEDDING_TABLE", "resolve_split",
]


logger = logging.getLogger("affordmap.splits")

PathLike = Union[str, "os.PathLike[str]"]

RESOURCE_DIR = os.path.join(os.path.dirname(__file__), "resources")
DEFAULT_EMBEDDING_TABLE = os.path.join(RESOURCE_DIR, "clip_text_embeddings.tsv")


def normalize_class_name(name: str) -> str:
    return re.sub(r"\s+", " ", name.strip().lower())


@dataclass(frozen=True)
class SplitSpec:
    name: str
    train_classes: frozenset
    test_classes: frozenset
    seed: Optional[int] = None
    allow_overlap: bool = False

    def __post_init__(self) -> None:
        train = frozenset(normalize_class_name(c) for c in self.train_classes)
        test = frozenset(normalize_class_name(c) for c in self.test_classes)
        object.__setattr__(self, "train_classes", train)
        object.__setattr__(self, "test_classes", test)
        if not train or not test:
            raise ValidationError(f"Split '{self.name}' needs non-empty train and test sides.")
        overlap = train & test
        if overlap and not self.allow_overlap:
            raise ValidationError(
                f"Split '{self.name}' has classes on both sides: {sorted(overlap)}."
            )

    def side(self, role: str) -> frozenset:
        if role == "train":
            return self.train_classes
        if role == "test":
            return self.test_classes
        raise ValidationError(f"Unknown split role '{role}'.")

    @property
    def sizes(self) -> Tuple[int, int]:
        return (len(self.train_classes), len(self.test_classes))


@dataclass
class EmbeddingTable:
    entries: Dict[str, np.ndarray]
    source: str = "unknown"
    dim: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValidationError("Embedding table is empty.")
        entries = {}
        dims = set()
        for name, vec in self.entries.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.ndim != 1:
                raise ValidationError(f"Embedding for '{name}' is not a vector.")
            if not np.all(np.isfinite(vec)) or not np.linalg.norm(vec) > 0:
                raise ValidationError(f"Embedding for '{name}' has zero norm or non-finite values.")
            dims.add(vec.shape[0])
            entries[normalize_class_name(name)] = vec
        if len(dims) != 1:
            raise ValidationError(f"Embeddings have inconsistent widths: {sorted(dims)}.")
        self.entries = entries
        self.dim = dims.pop()

    def __contains__(self, name: str) -> bool:
        return normalize_class_name(name) in self.entries

    def vector(self, name: str) -> np.ndarray:
        key = normalize_class_name(name)
        if key not in self.entries:
            raise MissingEmbeddingError(key)
        return self.entries[key]


def class_similarity(c: str, c_prime: str, table: EmbeddingTable) -> float:
    a = table.vector(c)
    b = table.vector(c_prime)
    if normalize_class_name(c) == normalize_class_name(c_prime):
        return 1.0
    cos = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(-1.0, cos))


def _check_covered(split: SplitSpec, table: EmbeddingTable) -> None:
    for name in sorted(split.train_classes | split.test_classes):
        if name not in table:
            raise MissingEmbeddingError(name)


def nearest_train_class(c: str, split: SplitSpec, table: EmbeddingTable) -> Tuple[str, float]:
    """The training class most similar to ``c`` and its similarity.

    Ties resolve to the alphabetically first class.
    """
    best_name = ""
    best = -math.inf
    for train_name in sorted(split.train_classes):
        value = class_similarity(c, train_name, table)
        if value > best:
            best_name, best = train_name, value
    return best_name, best


def per_class_difficulty(split: SplitSpec, table: EmbeddingTable) -> Dict[str, float]:
    _check_covered(split, table)
    return {
        name: 1.0 - nearest_train_class(name, split, table)[1]
        for name in sorted(split.test_classes)
    }


def split_difficulty(split: SplitSpec, table: EmbeddingTable) -> float:
    _check_covered(split, table)
    best = [nearest_train_class(name, split, table)[1] for name in sorted(split.test_classes)]
    return 1.0 - math.fsum(best) / len(best)


def build_random_split(
    classes: Iterable[str],
    test_fraction: float,
    seed: int,
    name: str = "random",
) -> SplitSpec:
    """Seeded random partition.

    Class names are normalized and sorted, permuted with
    ``numpy.random.default_rng(seed).permutation``, and the first
    ``floor(n * test_fraction)`` classes of the permutation form the test side.
    """
    names = sorted({normalize_class_name(c) for c in classes})
    if len(names) < 2:
        raise ValidationError("A random split needs at least two classes.")
    if not 0 < test_fraction < 1:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}.")
    n_test = int(math.floor(len(names) * test_fraction))
    if n_test == 0 or n_test == len(names):
        raise ValidationError(
            f"test_fraction {test_fraction} leaves one side of {len(names)} classes empty."
        )
    order = np.random.default_rng(seed).permutation(len(names))
    test = [names[i] for i in order[:n_test]]
    train = [names[i] for i in order[n_test:]]
    return SplitSpec(name, frozenset(train), frozenset(test), seed=seed)


def lvis_classes() -> List[str]:
    with open(os.path.join(RESOURCE_DIR, "lvis_classes.txt"), encoding="utf-8") as f:
        return [
            normalize_class_name(line) for line in f
            if line.strip() and not line.startswith("#")
        ]


def build_lvis_random_split(n_classes: int = 50, seed: int = 0) -> SplitSpec:
    """Evenly split ``n_classes`` LVIS categories drawn with ``seed``."""
    pool = sorted(set(lvis_classes()))
    if n_classes > len(pool):
        raise ValidationError(f"Only {len(pool)} LVIS classes available.")
    rng = np.random.default_rng(seed)
    chosen = [pool[i] for i in sorted(rng.choice(len(pool), size=n_classes, replace=False))]
    return build_random_split(chosen, 0.5, seed, name="random")


def same_split(classes: Iterable[str], name: str = "same") -> SplitSpec:
    names = frozenset(classes)
    return SplitSpec(name, names, names, allow_overlap=True)


def format_split(split: SplitSpec) -> str:
    lines = [f"# name: {split.name}"]
    if split.seed is not None:
        lines.append(f"# seed: {split.seed}")
    if split.allow_overlap:
        lines.append("# allow_overlap: true")
    lines.append("[train]")
    lines.extend(sorted(split.train_classes))
    lines.append("[test]")
    lines.extend(sorted(split.test_classes))
    return "\n".join(lines) + "\n"


def parse_split(text: str, name: str = "split") -> SplitSpec:
    sections: Dict[str, List[str]] = {"train": [], "test": []}
    current: Optional[str] = None
    seed: Optional[int] = None
    allow_overlap = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            if key.strip() == "name":
                name = value.strip()
            elif key.strip() == "seed":
                seed = int(value)
            elif key.strip() == "allow_overlap":
                allow_overlap = value.strip().lower() == "true"
            continue
        if line in ("[train]", "[test]"):
            current = line[1:-1]
            continue
        if current is None:
            raise ValidationError(f"Line {lineno}: class outside a [train]/[test] section.")
        sections[current].append(line)
    return SplitSpec(
        name, frozenset(sections["train"]), frozenset(sections["test"]), seed=seed,
        allow_overlap=allow_overlap,
    )


def read_split_file(path: PathLike) -> SplitSpec:
    with open(os.fspath(path), encoding="utf-8") as f:
        text = f.read()
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return parse_split(text, name=stem)


def write_split_file(split: SplitSpec, path: PathLike) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as f:
        f.write(format_split(split))


def load_canonical_splits() -> Tuple[SplitSpec, SplitSpec]:
    easy = read_split_file(os.path.join(RESOURCE_DIR, "easy.split"))
    hard = read_split_file(os.path.join(RESOURCE_DIR, "hard.split"))
    return easy, hard


def split_hash(split: SplitSpec) -> str:
    return hashlib.sha256(format_split(split).encode("utf-8")).hexdigest()


def load_embedding_table(path: PathLike) -> EmbeddingTable:
    entries: Dict[str, np.ndarray] = {}
    source = os.path.basename(os.fspath(path))
    with open(os.fspath(path), encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "source":
                    source = value.strip()
                continue
            name, sep, values = line.partition("\t")
            if not sep:
                raise ValidationError(f"{os.fspath(path)}:{lineno}: expected 'name<TAB>values'.")
            try:
                vec = np.array([float(v) for v in values.split(",")])
            except ValueError as err:
                raise ValidationError(f"{os.fspath(path)}:{lineno}: {err}") from err
            entries[name] = vec
    table = EmbeddingTable(entries, source=source)
    logger.info("Loaded %s class embeddings of width %s from %s", len(entries), table.dim, source)
    return table


def save_embedding_table(table: EmbeddingTable, path: PathLike) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# source: {table.source}\n")
        for name in sorted(table.entries):
            values = ",".join(repr(float(v)) for v in table.entries[name])
            f.write(f"{name}\t{values}\n")


def table_hash(table: EmbeddingTable) -> str:
    digest = hashlib.sha256()
    for name in sorted(table.entries):
        digest.update(name.encode("utf-8"))
        digest.update(np.asarray(table.entries[name], dtype="<f8").tobytes())
    return digest.hexdigest()


def embedding_table_from_mapping(vectors: Mapping[str, Iterable[float]], source: str = "inline") -> EmbeddingTable:
    return EmbeddingTable({k: np.asarray(list(v), dtype=np.float64) for k, v in vectors.items()}, source=source)


def resolve_split(name_or_path: str) -> SplitSpec:
    """``easy`` / ``hard`` name the canonical splits, anything else is a split file."""
    key = name_or_path.strip().lower()
    if key in ("easy", "hard"):
        easy, hard = load_canonical_splits()
        return easy if key == "easy" else hard
    if not os.path.exists(name_or_path):
        raise ValidationError(f"'{name_or_path}' is neither a canonical split name nor a split file.")
    return read_split_file(name_or_path)
