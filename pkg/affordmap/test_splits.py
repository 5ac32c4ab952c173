# type: ignore

import os
import runpy

import numpy as np
import pytest
from pytest import raises, approx
from hypothesis import given, settings
import hypothesis.strategies as st

from affordmap.basic import MissingEmbeddingError, ValidationError
from affordmap.conftest import SLOW
from affordmap.splits import (
    DEFAULT_EMBEDDING_TABLE, SplitSpec, build_lvis_random_split, build_random_split,
    class_similarity, embedding_table_from_mapping, format_split, load_canonical_splits,
    load_embedding_table, lvis_classes, nearest_train_class, parse_split,
    per_class_difficulty, read_split_file, resolve_split, same_split, save_embedding_table,
    split_difficulty, split_hash, table_hash, write_split_file,
)


BUILD_SCRIPT = os.path.join(os.path.dirname(__file__), os.pardir, "scripts", "build_clip_embeddings.py")


@pytest.fixture(scope="module")
def clip_table(tmp_path_factory):
    """The shipped CLIP table, or one built on the spot in slow runs."""
    if os.path.exists(DEFAULT_EMBEDDING_TABLE):
        return load_embedding_table(DEFAULT_EMBEDDING_TABLE)
    if not SLOW:
        pytest.skip("no class embedding table; AFFORDMAP_SLOW_TESTS=1 builds one with CLIP")
    pytest.importorskip("transformers")
    path = tmp_path_factory.mktemp("embeddings") / "clip_text_embeddings.tsv"
    build = runpy.run_path(BUILD_SCRIPT)["main"]
    assert build(["--output", str(path)]) == 0
    return load_embedding_table(str(path))


@pytest.fixture
def table():
    return embedding_table_from_mapping({
        "a": [1.0, 0.0],
        "b": [0.8, 0.6],
        "c": [0.0, 1.0],
        "d": [1.0, 1.0],
    })


def test_similarity_examples(table):
    assert class_similarity("a", "a", table) == 1.0
    assert class_similarity("a", "c", table) == approx(0.0)
    assert class_similarity("a", "d", table) == approx(0.707107, abs=1e-6)
    with raises(MissingEmbeddingError, match="zebra"):
        class_similarity("a", "zebra", table)


def test_difficulty_examples(table):
    split = SplitSpec("t", frozenset(["a"]), frozenset(["b"]))
    assert split_difficulty(split, table) == approx(0.2)
    assert split_difficulty(same_split(["a", "b", "c"]), table) == 0.0
    with raises(MissingEmbeddingError):
        split_difficulty(SplitSpec("t", frozenset(["a"]), frozenset(["q"])), table)


def test_difficulty_monotone_in_train(table):
    small = SplitSpec("s", frozenset(["a"]), frozenset(["c"]))
    large = SplitSpec("l", frozenset(["a", "d"]), frozenset(["c"]))
    assert split_difficulty(large, table) <= split_difficulty(small, table)


def test_difficulty_scale_invariant(table):
    scaled = embedding_table_from_mapping({k: 3.5 * v for k, v in table.entries.items()})
    split = SplitSpec("t", frozenset(["a", "d"]), frozenset(["b", "c"]))
    assert split_difficulty(split, scaled) == approx(split_difficulty(split, table), abs=1e-12)


def test_nearest_and_per_class(table):
    split = SplitSpec("t", frozenset(["a", "c"]), frozenset(["b", "d"]))
    assert nearest_train_class("b", split, table) == ("a", approx(0.8))
    # d is equally close to a and c
    assert nearest_train_class("d", split, table)[0] == "a"
    per_class = per_class_difficulty(split, table)
    assert list(per_class) == ["b", "d"]
    assert per_class["b"] == approx(0.2)
    assert np.mean(list(per_class.values())) == approx(split_difficulty(split, table))


def test_split_spec_invariants():
    with raises(ValidationError):
        SplitSpec("x", frozenset(["a"]), frozenset(["A "]))
    with raises(ValidationError):
        SplitSpec("x", frozenset(), frozenset(["a"]))
    spec = SplitSpec("x", frozenset(["Wine  Glass"]), frozenset(["cup"]))
    assert "wine glass" in spec.train_classes
    assert spec.side("test") == frozenset(["cup"])
    with raises(ValidationError):
        spec.side("val")


def test_canonical_splits():
    easy, hard = load_canonical_splits()
    assert easy.sizes == (33, 14)
    assert hard.sizes == (28, 22)
    assert "camera" in easy.test_classes
    assert "camera" in hard.train_classes
    for split in (easy, hard):
        assert not split.train_classes & split.test_classes
    assert easy.train_classes | easy.test_classes == hard.train_classes | hard.test_classes
    assert resolve_split("Hard") == hard
    with raises(ValidationError):
        resolve_split("no-such-split")


def test_random_split_examples():
    classes = [f"class {i:02d}" for i in range(50)]
    split = build_random_split(classes, 0.5, seed=3)
    assert split.sizes == (25, 25)
    assert split == build_random_split(reversed(classes), 0.5, seed=3)

    order = np.random.default_rng(11).permutation(4)
    names = ["a", "b", "c", "d"]
    expected_test = {names[i] for i in order[:2]}
    split = build_random_split(["d", "c", "b", "a"], 0.5, seed=11)
    assert split.test_classes == expected_test
    assert split.train_classes == set(names) - expected_test


def test_random_split_rejects():
    with raises(ValidationError):
        build_random_split(["a"], 0.5, seed=0)
    with raises(ValidationError):
        build_random_split(["a", "b", "c"], 0.2, seed=0)
    with raises(ValidationError):
        build_random_split(["a", "b"], 1.0, seed=0)


@settings(deadline=None, max_examples=100)
@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_random_split_partition(n, fraction, seed):
    classes = [f"c{i}" for i in range(n)]
    n_test = int(np.floor(n * fraction))
    if n_test in (0, n):
        return
    split = build_random_split(classes, fraction, seed)
    assert len(split.test_classes) == n_test
    assert split.train_classes | split.test_classes == set(classes)
    assert not split.train_classes & split.test_classes


def test_lvis_split():
    assert len(lvis_classes()) >= 50
    split = build_lvis_random_split(50, seed=0)
    assert split.sizes == (25, 25)
    assert split == build_lvis_random_split(50, seed=0)
    with raises(ValidationError):
        build_lvis_random_split(10_000)


def test_split_text_format(tmp_path):
    split = SplitSpec("demo", frozenset(["b", "a"]), frozenset(["c"]), seed=4)
    text = format_split(split)
    assert text == "# name: demo\n# seed: 4\n[train]\na\nb\n[test]\nc\n"
    assert parse_split(text) == split
    path = tmp_path / "other.split"
    write_split_file(split, path)
    assert read_split_file(path) == split
    with raises(ValidationError):
        parse_split("a\n[train]\nb\n[test]\nc\n")


def test_split_hash():
    easy, hard = load_canonical_splits()
    assert split_hash(easy) == split_hash(load_canonical_splits()[0])
    assert split_hash(easy) != split_hash(hard)
    assert len(split_hash(easy)) == 64


def test_embedding_table_io(tmp_path, table):
    path = tmp_path / "emb.tsv"
    save_embedding_table(table, path)
    loaded = load_embedding_table(path)
    assert loaded.source == "inline"
    assert table_hash(loaded) == table_hash(table)
    assert loaded.dim == 2
    path.write_text("a\t1,0\nb\t1,0,0\n")
    with raises(ValidationError):
        load_embedding_table(path)
    path.write_text("a 1,0\n")
    with raises(ValidationError):
        load_embedding_table(path)
    with raises(ValidationError):
        embedding_table_from_mapping({"z": [0.0, 0.0]})


def test_canonical_difficulty(clip_table):
    table = clip_table
    easy, hard = load_canonical_splits()
    d_easy = split_difficulty(easy, table)
    d_hard = split_difficulty(hard, table)
    d_random = split_difficulty(build_lvis_random_split(50, seed=0), table)
    assert d_easy == approx(0.356, abs=0.05)
    assert d_hard == approx(0.412, abs=0.05)
    assert 0.0 == split_difficulty(same_split(easy.train_classes | easy.test_classes), table)
    assert 0.0 < d_easy < d_hard < d_random
