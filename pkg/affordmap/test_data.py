# type: ignore

import logging

import numpy as np
import pytest
from PIL import Image
from pytest import raises

from affordmap.basic import DatasetError, ShapeMismatchError, ValidationError
from affordmap.data import (
    ANSWER_TEMPLATE, CATALOG, HELD_OUT_ARCHETYPES, MASK_TOKEN, SEEN_ARCHETYPES, PromptVariant,
    Sample, SyntheticConfig, Vocabulary, build_prompt, encode_example, generate_synthetic,
    load_agd20k, load_depth, load_image, render_archetype, synthetic_split,
)
from affordmap.data.synthetic import archetype_of, corpus
from affordmap.data.tokenizer import BOS_ID, EOS_ID, MASK_ID, PAD_ID, UNK_ID, split_words
from affordmap.densemap import DenseMap
from affordmap.splits import load_canonical_splits


def test_prompt_variants():
    assert build_prompt("knife", "hold", PromptVariant.HI) == "Hi"
    assert build_prompt("knife", "hold", "Action") == "hold"
    assert build_prompt("knife", "hold", "Object+Action") == "hold, knife"
    assert build_prompt("knife", "cut with", PromptVariant.FULL) == (
        "What part of the knife should we interact with in order to cut with it?"
    )
    assert build_prompt("", "", "Hi") == "Hi"
    with raises(ValidationError):
        build_prompt("", "hold", "Full")
    with raises(ValidationError):
        build_prompt("knife", " ", "Action")
    with raises(ValidationError):
        PromptVariant.parse("Verbose")


def test_split_words():
    assert split_words("Hold, knife") == ["hold", ",", "knife"]
    assert split_words(f"the {MASK_TOKEN} region.") == ["the", MASK_TOKEN, "region", "."]
    assert split_words("tennis-racket isn't") == ["tennis-racket", "isn't"]


def make_vocab():
    return Vocabulary.build(["hi", "hold, knife", ANSWER_TEMPLATE])


def test_vocabulary_basics():
    vocab = make_vocab()
    assert vocab.word(PAD_ID) == "<pad>"
    assert vocab.word(MASK_ID) == MASK_TOKEN
    ids = vocab.tokenize("Hi")
    assert ids == [BOS_ID, vocab.id("hi"), EOS_ID]
    assert vocab.detokenize(vocab.tokenize("hold, knife")) == "hold, knife"
    assert vocab.id("zebra") == UNK_ID
    assert vocab.encode("a <mask_token> b", add_bos=False, add_eos=False)[1] == MASK_ID
    assert "mask_token" not in vocab
    assert vocab.detokenize([BOS_ID, vocab.id("hold"), len(vocab), 400, EOS_ID]) == "hold <unk> <unk>"


def test_vocabulary_build_is_deterministic():
    texts = ["b a", "a c", "c b a"]
    first = Vocabulary.build(texts)
    second = Vocabulary.build(list(reversed(texts)))
    assert first.to_dict() == second.to_dict()
    assert first.to_dict()["words"][5:] == ["a", "b", "c"]
    small = Vocabulary.build(texts, max_size=6)
    assert len(small) == 6
    assert Vocabulary.from_dict(small.to_dict()).to_dict() == small.to_dict()


def test_vocabulary_rejects():
    with raises(ValidationError):
        Vocabulary(["a", "b"])
    with raises(ValidationError):
        Vocabulary(["<pad>", "<bos>", "<eos>", "<unk>", MASK_TOKEN, "a", "a"])


def test_encode_example():
    vocab = make_vocab()
    ex = encode_example("knife", "hold", "ObjectAction", vocab)
    assert ex.ids[0] == BOS_ID and ex.ids[-1] == EOS_ID
    assert ex.prompt_len == 4
    assert vocab.detokenize(ex.prompt_ids) == "hold, knife"
    assert ex.ids[ex.mask_index] == MASK_ID
    assert ex.ignore.shape == (len(ex.ids) - 1,)
    assert ex.ignore.sum() == ex.prompt_len - 1
    with raises(ValidationError):
        encode_example("knife", "hold", "Full", vocab, answer="no marker here")
    with raises(ValidationError):
        encode_example("knife", "hold", "Full", vocab, answer=f"{MASK_TOKEN} {MASK_TOKEN}")


def test_sample_validation():
    image = np.zeros((4, 4, 3))
    gt = DenseMap(np.ones((2, 2)))
    with raises(ShapeMismatchError):
        Sample("x", np.zeros((4, 4)), "cup", "hold", gt)
    with raises(ShapeMismatchError):
        Sample("x", image, "cup", "hold", gt, depth=np.zeros((3, 4)))
    with raises(DatasetError):
        Sample("x", image, "cup", "hold", DenseMap(np.zeros((2, 2))))
    with raises(DatasetError):
        Sample("x", image, "cup", "hold", gt, split_role="val")
    assert Sample("a/b/c", image, "cup", "hold", DenseMap(np.zeros((2, 2))), "test").file_stem == "a__b__c"


def test_load_agd20k(agd20k_root, caplog):
    easy, _ = load_canonical_splits()
    with caplog.at_level(logging.WARNING, logger="affordmap.data.agd20k"):
        train = load_agd20k(agd20k_root, easy, "train", image_size=16, use_depth=True)
    assert [s.sample_id for s in train] == [
        "cut_with/scissors/s1", "hold/hammer/h1", "hold/hammer/h2",
    ]
    assert "zebra" in caplog.text
    sample = train[0]
    assert sample.action_name == "cut with"
    assert sample.image.shape == (16, 16, 3)
    assert sample.depth.shape == (16, 16)
    assert sample.gt_map.shape == (20, 24)
    assert 0 <= sample.image.min() and sample.image.max() <= 1

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="affordmap.data.agd20k"):
        test = load_agd20k(agd20k_root, easy, "test")
    assert [s.sample_id for s in test] == ["hold/knife/k1", "hold/knife/k2"]
    assert "hold/cup/c1" in caplog.text
    assert test[0].depth is None
    assert test[0].image.shape == (20, 24, 3)


def test_load_agd20k_errors(agd20k_root, tmp_path):
    easy, _ = load_canonical_splits()
    empty = tmp_path / "empty"
    (empty / "train").mkdir(parents=True)
    with raises(DatasetError):
        load_agd20k(empty, easy, "train")
    with raises(DatasetError):
        load_agd20k(tmp_path / "missing", easy, "train")
    (agd20k_root / "annotations" / "hold" / "hammer" / "h2.png").unlink()
    with raises(DatasetError, match="h2"):
        load_agd20k(agd20k_root, easy, "train")


def test_load_depth(tmp_path):
    path = tmp_path / "d.png"
    Image.fromarray(np.array([[0, 65535], [65535, 0]], dtype=np.uint16)).save(path)
    np.testing.assert_allclose(load_depth(path), [[0, 1], [1, 0]])
    Image.fromarray(np.full((3, 3), 1000, dtype=np.uint16)).save(path)
    np.testing.assert_array_equal(load_depth(path), np.zeros((3, 3)))
    with raises(DatasetError):
        load_depth(tmp_path / "nope.png")


def test_load_image(tmp_path):
    path = tmp_path / "i.png"
    Image.fromarray(np.full((5, 6), 255, dtype=np.uint8)).save(path)
    image = load_image(path)
    assert image.shape == (5, 6, 3)
    np.testing.assert_allclose(image, 1.0)
    assert load_image(path, image_size=8).shape == (8, 8, 3)


def test_synthetic_deterministic():
    cfg = SyntheticConfig(n_samples=6, image_size=32, seed=5)
    a = generate_synthetic(cfg)
    b = generate_synthetic(cfg)
    for x, y in zip(a, b):
        assert x.sample_id == y.sample_id
        assert x.object_name == y.object_name and x.action_name == y.action_name
        np.testing.assert_array_equal(x.image, y.image)
        np.testing.assert_array_equal(x.depth, y.depth)
        np.testing.assert_array_equal(x.gt_map.values, y.gt_map.values)
    c = generate_synthetic(SyntheticConfig(n_samples=6, image_size=32, seed=6))
    assert not np.array_equal(a[0].image, c[0].image)


@pytest.mark.parametrize("size", [16, 32, 96])
def test_synthetic_samples_are_valid(size):
    samples = generate_synthetic(SyntheticConfig(n_samples=12, image_size=size, class_inventory=tuple(CATALOG)))
    for s in samples:
        assert s.image.shape == (size, size, 3)
        assert s.depth.shape == (size, size)
        assert s.gt_map.total > 0
        assert s.gt_map.values.max() == pytest.approx(1.0)
        assert archetype_of(s.object_name).name in CATALOG
        assert 0 <= s.depth.min() and s.depth.max() <= 1


def test_synthetic_region_follows_action():
    rng = np.random.default_rng(0)
    _, _, handle = render_archetype("handled-tool", "hold", rng, 64)
    rng = np.random.default_rng(0)
    _, _, body = render_archetype("handled-tool", "cut", rng, 64)
    assert handle.any() and body.any()
    assert not (handle & body).any()


def test_synthetic_errors():
    with raises(ValidationError):
        SyntheticConfig(n_samples=1, class_inventory=("spaceship",))
    with raises(ValidationError):
        SyntheticConfig(n_samples=0)
    with raises(ValidationError):
        render_archetype("seat", "kick", np.random.default_rng(0), 16)
    with raises(ValidationError):
        archetype_of("zebra")


def test_synthetic_split():
    split = synthetic_split()
    for name in SEEN_ARCHETYPES:
        assert set(CATALOG[name].objects) <= split.train_classes
    for name in HELD_OUT_ARCHETYPES:
        assert set(CATALOG[name].objects) <= split.test_classes
    assert not split.train_classes & split.test_classes
    pairs = corpus(SEEN_ARCHETYPES)
    assert ("hammer", "hold") in pairs
    assert all(archetype_of(obj).name in SEEN_ARCHETYPES for obj, _ in pairs)
