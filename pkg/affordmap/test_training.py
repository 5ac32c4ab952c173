# type: ignore

import math

import numpy as np
import pytest
import torch
from pytest import raises

from affordmap.basic import DatasetError, TrainingError
from affordmap.config import DatasetConfig, OptimizerConfig, RunConfig
from affordmap.conftest import slow
from affordmap.data import SyntheticConfig, generate_synthetic
from affordmap.data.tokenizer import MASK_ID, PAD_ID
from affordmap.model import GenerationStats, ModelConfig
from affordmap.splits import load_canonical_splits
from affordmap.training import (
    AffordanceDataset, build_vocabulary, collate, evaluate_predictions, history_frame,
    load_datasets, mask_emission_rate, predict_samples, run_manifest, train, uniform_report,
)


def tiny_run(**optimizer):
    model = ModelConfig.tiny(image_size=32, map_size=8, vocab_size=64, max_positions=64)
    return RunConfig(
        model=model,
        optimizer=OptimizerConfig(learning_rate=1e-3, batch_size=2, steps=3, log_every=1, **optimizer),
        dataset=DatasetConfig(n_train=6, n_test=3),
    )


def test_collate_pads_and_ignores():
    cfg = tiny_run()
    samples = generate_synthetic(SyntheticConfig(n_samples=2, image_size=32))
    vocab = build_vocabulary(samples, cfg.variant, cfg.model.vocab_size)
    short = RunConfig(model=cfg.model, prompt_variant="Hi")
    dataset_long = AffordanceDataset(samples, vocab, cfg.variant, 8, True)
    vocab_short = build_vocabulary(samples, short.variant, 64)
    dataset_short = AffordanceDataset(samples, vocab_short, short.variant, 8, True)
    batch = collate([dataset_long[0], dataset_short[1]])
    n_short = len(dataset_short[1]["ids"])
    assert batch["ids"].shape[0] == 2
    assert (batch["ids"][1, n_short:] == PAD_ID).all()
    assert batch["ignore"][1, n_short - 1:].all()
    assert batch["gt"].shape == (2, 8, 8)
    assert batch["image"].shape == (2, 32, 32, 3)


def test_dataset_requires_depth():
    samples = generate_synthetic(SyntheticConfig(n_samples=2, image_size=32, use_depth=False))
    vocab = build_vocabulary(samples, tiny_run().variant, 64)
    with raises(DatasetError):
        AffordanceDataset(samples, vocab, tiny_run().variant, 8, True)
    item = AffordanceDataset(samples, vocab, tiny_run().variant, 8, False)[0]
    assert float(item["depth"].abs().sum()) == 0.0


def test_vocabulary_leaves_held_out_objects_unknown():
    cfg = tiny_run()
    train_samples, _, _ = load_datasets(cfg)
    vocab = build_vocabulary(train_samples, cfg.variant, 64)
    assert "hammer" in vocab or "knife" in vocab
    assert "bottle" not in vocab
    assert "<mask_token>" in vocab
    assert vocab.word(MASK_ID) == "<mask_token>"


def test_load_datasets_agd20k(agd20k_root):
    cfg = tiny_run().replace(
        dataset=DatasetConfig(kind="agd20k", root=str(agd20k_root), split="easy"),
    )
    train_samples, test_samples, split = load_datasets(cfg)
    assert split == load_canonical_splits()[0]
    assert len(train_samples) == 3 and len(test_samples) == 2
    assert train_samples[0].image.shape == (32, 32, 3)
    missing = cfg.replace(dataset=DatasetConfig(kind="agd20k", root=str(agd20k_root / "nope")))
    with raises(DatasetError):
        load_datasets(missing)


def test_short_run_is_deterministic():
    cfg = tiny_run()
    samples, test_samples, split = load_datasets(cfg)
    a = train(cfg, samples)
    b = train(cfg, samples)
    assert len(a.history) == 3
    assert a.history == b.history
    assert all(math.isfinite(r["total"]) for r in a.history)
    frame = history_frame(a.history)
    assert list(frame.columns) == ["step", "l_aff", "l_text", "total"]

    stats = GenerationStats()
    predictions = predict_samples(a.model, test_samples, a.vocab, cfg.variant, 2, stats)
    assert [sid for sid, _ in predictions] == [s.sample_id for s in test_samples]
    assert stats.calls == len(test_samples)
    report = evaluate_predictions(predictions, test_samples)
    assert report.num_samples == len(test_samples)
    assert uniform_report(test_samples).num_samples == len(test_samples)

    manifest = run_manifest(cfg, split, a, {"test": stats})
    assert manifest["config_hash"] == cfg.config_hash()
    assert manifest["split"]["name"] == "synthetic-hard"
    assert manifest["losses"]["steps"] == 3
    assert manifest["deviations"][0]["field"] == "optimizer.learning_rate"
    assert manifest["generation"]["test"]["calls"] == len(test_samples)


def test_non_finite_loss_names_batch(monkeypatch):
    cfg = tiny_run()
    samples, _, _ = load_datasets(cfg)

    def broken(pred, gt, w):
        return torch.tensor(float("nan"), dtype=pred.dtype)

    monkeypatch.setattr("affordmap.training.focal_loss_torch", broken)
    with raises(TrainingError) as info:
        train(cfg, samples)
    assert set(info.value.sample_ids) <= {s.sample_id for s in samples}
    assert info.value.sample_ids


@slow
@pytest.mark.parametrize("use_depth", [True, False])
def test_desk_scale_learning(use_depth):
    cfg = RunConfig.synthetic_preset(use_depth=use_depth)
    samples, test_samples, _ = load_datasets(cfg)
    result = train(cfg, samples)
    assert result.last["l_aff"] <= 0.5 * result.first["l_aff"]

    stats = mask_emission_rate(result.model, samples, result.vocab, cfg.variant)
    assert stats.forced_rate <= 0.1

    predictions = predict_samples(result.model, test_samples, result.vocab, cfg.variant)
    report = evaluate_predictions(predictions, test_samples)
    baseline = uniform_report(test_samples)
    assert report.mean_nss > 0.5
    assert report.mean_sim >= 2 * baseline.mean_sim
    assert np.isfinite(report.mean_kld)


@slow
def test_depth_ablation_gives_distinct_reports():
    summaries = []
    for use_depth in (True, False):
        cfg = RunConfig.synthetic_preset(use_depth=use_depth)
        cfg = cfg.replace(
            optimizer=OptimizerConfig(learning_rate=1e-3, steps=300, seed=0),
            dataset=DatasetConfig(n_train=64, n_test=16, test_inventory="held_out"),
        )
        samples, test_samples, _ = load_datasets(cfg)
        result = train(cfg, samples)
        predictions = predict_samples(result.model, test_samples, result.vocab, cfg.variant)
        summaries.append(evaluate_predictions(predictions, test_samples).summary())
    assert all(np.isfinite(summaries[0])) and all(np.isfinite(summaries[1]))
    assert summaries[0] != summaries[1]
