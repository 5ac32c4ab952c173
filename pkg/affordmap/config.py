"""Run configuration: one JSON document describing a training run.

Defaults carry the values stated for the full-scale system (learning rate,
batch size, loss weights). :meth:`RunConfig.synthetic_preset` is the
desk-scale setting used for the toy dataset; :meth:`RunConfig.deviations`
lists where a config departs from the full-scale values.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Union

from affordmap.basic import ValidationError, canonical_json, check_positive
from affordmap.data.prompts import PromptVariant
from affordmap.losses import LossWeights
from affordmap.model.config import ModelConfig, from_dict_strict


__all__ = [
    "RunConfig", "OptimizerConfig", "DatasetConfig", "ParallelConfig",
    "REFERENCE_DEFAULTS", "load_run_config",
]


logger = logging.getLogger("affordmap.config")

PathLike = Union[str, "os.PathLike[str]"]


REFERENCE_DEFAULTS: Dict[str, Any] = {
    "optimizer.learning_rate": 2e-5,
    "optimizer.batch_size": 4,
    "losses.lambda_text": 0.01,
    "losses.alpha_pos": 0.95,
    "losses.alpha_neg": 0.05,
    "prompt_variant": PromptVariant.FULL.value,
}


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 2e-5
    batch_size: int = 4
    steps: int = 2000
    seed: int = 0
    weight_decay: float = 0.0
    grad_clip: Optional[float] = 1.0
    log_every: int = 50
    max_new_tokens: int = 16

    def validate(self) -> None:
        check_positive(self.learning_rate, "learning_rate")
        if self.batch_size < 1 or self.steps < 1 or self.log_every < 1 or self.max_new_tokens < 1:
            raise ValidationError("batch_size, steps, log_every and max_new_tokens must be positive.")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0.")
        if self.grad_clip is not None:
            check_positive(self.grad_clip, "grad_clip")


@dataclasses.dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    root: Optional[str] = None
    split: str = "hard"
    n_train: int = 256
    n_test: int = 64
    data_seed: int = 0
    test_inventory: str = "seen"

    def validate(self) -> None:
        if self.kind not in ("synthetic", "agd20k"):
            raise ValidationError(f"Unknown dataset kind '{self.kind}'.")
        if self.kind == "agd20k" and not self.root:
            raise ValidationError("An agd20k dataset needs a root directory.")
        if self.kind == "synthetic" and (self.n_train < 1 or self.n_test < 1):
            raise ValidationError("n_train and n_test must be positive.")
        if self.test_inventory not in ("seen", "held_out"):
            raise ValidationError("test_inventory must be 'seen' or 'held_out'.")


@dataclasses.dataclass(frozen=True)
class ParallelConfig:
    """Worker counts. Sharded multi-device training is not implemented."""
    data_workers: int = 0
    eval_workers: int = 1

    def validate(self) -> None:
        if self.data_workers < 0 or self.eval_workers < 1:
            raise ValidationError("data_workers must be >= 0 and eval_workers >= 1.")


_SECTIONS = {
    "model": ModelConfig,
    "losses": LossWeights,
    "optimizer": OptimizerConfig,
    "dataset": DatasetConfig,
    "parallel": ParallelConfig,
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    losses: LossWeights = dataclasses.field(default_factory=LossWeights)
    prompt_variant: str = PromptVariant.FULL.value
    dataset: DatasetConfig = dataclasses.field(default_factory=DatasetConfig)
    optimizer: OptimizerConfig = dataclasses.field(default_factory=OptimizerConfig)
    parallel: ParallelConfig = dataclasses.field(default_factory=ParallelConfig)
    output_dir: Optional[str] = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        PromptVariant.parse(self.prompt_variant)
        self.model.validate()
        self.optimizer.validate()
        self.dataset.validate()
        self.parallel.validate()

    @property
    def variant(self) -> PromptVariant:
        return PromptVariant.parse(self.prompt_variant)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValidationError(f"Unknown keys in run config: {unknown}.")
        values: Dict[str, Any] = {}
        for key, value in data.items():
            if key in _SECTIONS:
                if not isinstance(value, Mapping):
                    raise ValidationError(f"Run config section '{key}' must be an object.")
                values[key] = from_dict_strict(_SECTIONS[key], value, f"'{key}' section")
            else:
                values[key] = value
        try:
            return cls(**values)
        except TypeError as err:
            raise ValidationError(str(err)) from err

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except ValueError as err:
            raise ValidationError(f"Run config is not valid JSON: {err}") from err
        if not isinstance(data, dict):
            raise ValidationError("Run config must be a JSON object.")
        return cls.from_dict(data)

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def synthetic_preset(cls, use_depth: bool = True, seed: int = 0) -> "RunConfig":
        """Desk-scale run on the synthetic catalog.

        The toy model trains from scratch, so it needs a much larger learning
        rate than fine-tuning a pretrained model.
        """
        return cls(
            model=ModelConfig(use_depth=use_depth, seed=seed),
            optimizer=OptimizerConfig(learning_rate=1e-3, steps=2000, seed=seed),
            dataset=DatasetConfig(kind="synthetic", n_train=256, n_test=64, data_seed=seed),
        )

    def deviations(self) -> List[Dict[str, Any]]:
        flat = {
            "optimizer.learning_rate": self.optimizer.learning_rate,
            "optimizer.batch_size": self.optimizer.batch_size,
            "losses.lambda_text": self.losses.lambda_text,
            "losses.alpha_pos": self.losses.alpha_pos,
            "losses.alpha_neg": self.losses.alpha_neg,
            "prompt_variant": self.variant.value,
        }
        return [
            {"field": key, "value": flat[key], "reference": ref}
            for key, ref in REFERENCE_DEFAULTS.items()
            if flat[key] != ref
        ]


def load_run_config(path: PathLike) -> RunConfig:
    if not os.path.isfile(os.fspath(path)):
        raise ValidationError(f"Run config {os.fspath(path)} does not exist.")
    with open(os.fspath(path), encoding="utf-8") as f:
        return RunConfig.from_json(f.read())
