"""Training loop, batched inference and held-out evaluation."""
from __future__ import annotations

import logging
import math
import os
import platform
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, Dataset

import affordmap
from affordmap.basic import DatasetError, TrainingError, ValidationError
from affordmap.config import RunConfig
from affordmap.data.agd20k import load_agd20k
from affordmap.data.prompts import ANSWER_TEMPLATE, PromptVariant, build_prompt
from affordmap.data.sample import Sample
from affordmap.data.synthetic import (
    HELD_OUT_ARCHETYPES, SEEN_ARCHETYPES, SyntheticConfig, generate_synthetic, synthetic_split,
)
from affordmap.data.tokenizer import PAD_ID, TextExample, Vocabulary, encode_example
from affordmap.densemap import DenseMap, resize_bilinear, uniform_map
from affordmap.losses import LossWeights, focal_loss_torch, text_loss_torch
from affordmap.metrics import MetricReport, evaluate_batch
from affordmap.model.network import AffordanceModel, GenerationStats
from affordmap.splits import (
    DEFAULT_EMBEDDING_TABLE, SplitSpec, load_embedding_table, resolve_split, split_hash, table_hash,
)


__all__ = [
    "AffordanceDataset", "collate", "build_vocabulary", "load_datasets", "train",
    "TrainResult", "predict_samples", "evaluate_predictions", "uniform_report",
    "mask_emission_rate", "run_manifest", "history_frame",
]


logger = logging.getLogger("affordmap.training")


def build_vocabulary(samples: Sequence[Sample], variant: PromptVariant, vocab_size: int) -> Vocabulary:
    corpus = [build_prompt(s.object_name, s.action_name, variant) for s in samples]
    corpus.append(ANSWER_TEMPLATE)
    vocab = Vocabulary.build(corpus, max_size=vocab_size)
    logger.info("Vocabulary: %s tokens from %s prompts", len(vocab), len(corpus) - 1)
    return vocab


class AffordanceDataset(Dataset):
    """Model-ready tensors for each sample; ground truth resized to ``map_size``."""

    def __init__(
        self, samples: Sequence[Sample], vocab: Vocabulary, variant: PromptVariant,
        map_size: int, use_depth: bool,
    ) -> None:
        self.samples = list(samples)
        self.use_depth = use_depth
        self.texts: List[TextExample] = [
            encode_example(s.object_name, s.action_name, variant, vocab) for s in self.samples
        ]
        self.targets = [
            resize_bilinear(s.gt_map, map_size, map_size).values for s in self.samples
        ]
        if use_depth:
            for s in self.samples:
                if s.depth is None:
                    raise DatasetError(f"{s.sample_id}: depth enabled but the sample has none.")

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int) -> Dict[str, Any]:
        sample = self.samples[idx]
        text = self.texts[idx]
        depth = sample.depth if self.use_depth else np.zeros(sample.image.shape[:2])
        return {
            "index": idx,
            "image": torch.from_numpy(sample.image),
            "depth": torch.from_numpy(np.asarray(depth, dtype=np.float64)),
            "ids": torch.from_numpy(text.ids),
            "ignore": torch.from_numpy(text.ignore),
            "gt": torch.from_numpy(self.targets[idx]),
        }


def collate(items: List[Dict[str, Any]]) -> Dict[str, torch.Tensor]:
    """Stack a batch, right padding token ids with ``<pad>`` (ignored by the text loss)."""
    length = max(len(item["ids"]) for item in items)
    ids = torch.full((len(items), length), PAD_ID, dtype=torch.int64)
    ignore = torch.ones((len(items), length - 1), dtype=torch.bool)
    for row, item in enumerate(items):
        n = len(item["ids"])
        ids[row, :n] = item["ids"]
        ignore[row, :n - 1] = item["ignore"]
    return {
        "index": torch.tensor([item["index"] for item in items]),
        "image": torch.stack([item["image"] for item in items]),
        "depth": torch.stack([item["depth"] for item in items]),
        "ids": ids,
        "ignore": ignore,
        "gt": torch.stack([item["gt"] for item in items]),
    }


def load_datasets(cfg: RunConfig) -> Tuple[List[Sample], List[Sample], SplitSpec]:
    ds = cfg.dataset
    size = cfg.model.image_size
    if ds.kind == "synthetic":
        split = synthetic_split()
        inventory = SEEN_ARCHETYPES if ds.test_inventory == "seen" else HELD_OUT_ARCHETYPES
        train = generate_synthetic(SyntheticConfig(
            ds.n_train, size, SEEN_ARCHETYPES, ds.data_seed, "train", cfg.model.use_depth,
        ))
        test = generate_synthetic(SyntheticConfig(
            ds.n_test, size, inventory, ds.data_seed + 1, "test", cfg.model.use_depth,
        ))
        return train, test, split
    if not ds.root or not os.path.isdir(ds.root):
        raise DatasetError(f"Dataset root {ds.root} does not exist.")
    split = resolve_split(ds.split)
    train = load_agd20k(ds.root, split, "train", size, cfg.model.use_depth)
    test = load_agd20k(ds.root, split, "test", size, cfg.model.use_depth)
    return train, test, split


@dataclass
class TrainResult:
    model: AffordanceModel
    vocab: Vocabulary
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def first(self) -> Dict[str, float]:
        return self.history[0]

    @property
    def last(self) -> Dict[str, float]:
        return self.history[-1]


def history_frame(history: Sequence[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(list(history), columns=["step", "l_aff", "l_text", "total"])


def _batches(loader: DataLoader) -> Iterator[Dict[str, torch.Tensor]]:
    while True:
        for batch in loader:
            yield batch


def train(
    cfg: RunConfig,
    samples: Sequence[Sample],
    vocab: Optional[Vocabulary] = None,
    device: str = "cpu",
    steps: Optional[int] = None,
) -> TrainResult:
    """Optimize ``L_aff + lambda_text * L_text`` with AdamW.

    Raises :class:`TrainingError` naming the batch's sample ids as soon as
    the loss stops being finite.
    """
    if not samples:
        raise DatasetError("No training samples.")
    opt = cfg.optimizer
    variant = cfg.variant
    if vocab is None:
        vocab = build_vocabulary(samples, variant, cfg.model.vocab_size)
    if len(vocab) > cfg.model.vocab_size:
        raise ValidationError(f"Vocabulary of {len(vocab)} exceeds vocab_size {cfg.model.vocab_size}.")
    dataset = AffordanceDataset(samples, vocab, variant, cfg.model.map_size, cfg.model.use_depth)

    model = AffordanceModel(cfg.model).to(device)
    generator = torch.Generator()
    generator.manual_seed(opt.seed)
    loader = DataLoader(
        dataset,
        batch_size=min(opt.batch_size, len(dataset)),
        shuffle=True,
        drop_last=True,
        collate_fn=collate,
        generator=generator,
        num_workers=cfg.parallel.data_workers,
    )
    optimizer = torch.optim.AdamW(model.parameters(), lr=opt.learning_rate, weight_decay=opt.weight_decay)
    weights: LossWeights = cfg.losses
    n_steps = opt.steps if steps is None else steps
    logger.info(
        "Training for %s steps: AdamW lr=%g, batch %s, %s samples, depth=%s",
        n_steps, opt.learning_rate, opt.batch_size, len(dataset), cfg.model.use_depth,
    )

    result = TrainResult(model, vocab)
    model.train()
    batches = _batches(loader)
    for step in range(n_steps):
        batch = next(batches)
        images = batch["image"].to(device, model.dtype)
        depth = batch["depth"].to(device, model.dtype) if cfg.model.use_depth else None
        ids = batch["ids"].to(device)
        gt = batch["gt"].to(device, model.dtype)

        logits, maps = model(images, depth, ids)
        l_aff = focal_loss_torch(maps, gt, weights)
        l_text = text_loss_torch(logits, ids[:, 1:], batch["ignore"].to(device))
        total = l_aff + weights.lambda_text * l_text
        if not bool(torch.isfinite(total)):
            bad = [samples[int(i)].sample_id for i in batch["index"]]
            raise TrainingError(f"Non-finite loss at step {step}", bad)

        optimizer.zero_grad()
        total.backward()
        if opt.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), opt.grad_clip)
        optimizer.step()

        record = {
            "step": step, "l_aff": float(l_aff), "l_text": float(l_text), "total": float(total),
        }
        result.history.append(record)
        if step % opt.log_every == 0 or step == n_steps - 1:
            logger.info(
                "step %5d  l_aff %.5f  l_text %.4f  total %.5f",
                step, record["l_aff"], record["l_text"], record["total"],
            )
    model.eval()
    return result


def predict_samples(
    model: AffordanceModel,
    samples: Sequence[Sample],
    vocab: Vocabulary,
    variant: PromptVariant,
    max_new_tokens: int = 16,
    stats: Optional[GenerationStats] = None,
) -> List[Tuple[str, DenseMap]]:
    """Generate a map for each sample (no ground truth needed)."""
    out = []
    model.eval()
    for sample in samples:
        prompt = vocab.encode(build_prompt(sample.object_name, sample.action_name, variant), add_eos=False)
        depth = sample.depth if model.cfg.use_depth else None
        if model.cfg.use_depth and depth is None:
            raise DatasetError(f"{sample.sample_id}: model needs depth but the sample has none.")
        generation = model.generate(
            sample.image, depth, prompt, max_new_tokens, stats, vocab_size=len(vocab)
        )
        out.append((sample.sample_id, generation.affordance))
    return out


def evaluate_predictions(
    predictions: Sequence[Tuple[str, DenseMap]], samples: Sequence[Sample], workers: int = 1
) -> MetricReport:
    by_id = {s.sample_id: s for s in samples}
    pairs = [(pred, by_id[sample_id].gt_map, sample_id) for sample_id, pred in predictions]
    return evaluate_batch(pairs, workers=workers)


def uniform_report(samples: Sequence[Sample], workers: int = 1) -> MetricReport:
    pairs = [(uniform_map(*s.gt_map.shape), s.gt_map, s.sample_id) for s in samples]
    return evaluate_batch(pairs, workers=workers)


@torch.no_grad()
def mask_emission_rate(
    model: AffordanceModel, samples: Sequence[Sample], vocab: Vocabulary,
    variant: PromptVariant, max_new_tokens: int = 16,
) -> GenerationStats:
    stats = GenerationStats()
    predict_samples(model, samples, vocab, variant, max_new_tokens, stats)
    logger.info(
        "<mask_token> forced on %s of %s samples (%.1f%%)",
        stats.forced, stats.calls, 100 * stats.forced_rate,
    )
    return stats


def _embedding_hash() -> Optional[str]:
    if not os.path.exists(DEFAULT_EMBEDDING_TABLE):
        return None
    return table_hash(load_embedding_table(DEFAULT_EMBEDDING_TABLE))


def run_manifest(
    cfg: RunConfig,
    split: SplitSpec,
    result: TrainResult,
    stats: Dict[str, GenerationStats],
) -> Dict[str, Any]:
    """Everything needed to reproduce and audit a run."""
    deviations = cfg.deviations()
    for item in deviations:
        logger.warning(
            "%s = %s departs from the reference value %s", item["field"], item["value"], item["reference"]
        )
    first, last = result.first, result.last
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.optimizer.seed,
        "model_seed": cfg.model.seed,
        "optimizer": "AdamW",
        "split": {"name": split.name, "hash": split_hash(split), "sizes": list(split.sizes)},
        "embedding_table_hash": _embedding_hash(),
        "deviations": deviations,
        "generation": {name: s.to_dict() for name, s in stats.items()},
        "losses": {
            "steps": len(result.history),
            "first": first,
            "last": last,
            "l_aff_ratio": last["l_aff"] / first["l_aff"] if first["l_aff"] > 0 else math.nan,
        },
        "versions": {
            "affordmap": affordmap.__version__,
            "torch": torch.__version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
