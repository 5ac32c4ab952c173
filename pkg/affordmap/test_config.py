# type: ignore

import json

from pytest import raises

from affordmap.basic import ValidationError
from affordmap.config import (
    REFERENCE_DEFAULTS, DatasetConfig, OptimizerConfig, RunConfig, load_run_config,
)
from affordmap.data import PromptVariant
from affordmap.model import ModelConfig


def test_defaults_match_reference():
    cfg = RunConfig()
    assert cfg.deviations() == []
    assert cfg.optimizer.learning_rate == REFERENCE_DEFAULTS["optimizer.learning_rate"]
    assert cfg.optimizer.batch_size == 4
    assert cfg.losses.lambda_text == 0.01
    assert cfg.variant is PromptVariant.FULL


def test_synthetic_preset_records_deviation():
    cfg = RunConfig.synthetic_preset(use_depth=False, seed=3)
    assert not cfg.model.use_depth
    assert cfg.model.seed == 3 and cfg.dataset.data_seed == 3
    assert cfg.deviations() == [
        {"field": "optimizer.learning_rate", "value": 1e-3, "reference": 2e-5},
    ]
    changed = cfg.replace(prompt_variant="Hi")
    fields = [d["field"] for d in changed.deviations()]
    assert fields == ["optimizer.learning_rate", "prompt_variant"]


def test_json_round_trip(tmp_path):
    cfg = RunConfig.synthetic_preset()
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    path = tmp_path / "run.json"
    path.write_text(cfg.to_json())
    assert load_run_config(path) == cfg


def test_partial_document_uses_defaults():
    cfg = RunConfig.from_dict({"optimizer": {"steps": 10}, "prompt_variant": "Action"})
    assert cfg.optimizer.steps == 10
    assert cfg.optimizer.learning_rate == 2e-5
    assert cfg.model == ModelConfig()


def test_hash_is_stable():
    a = RunConfig.synthetic_preset()
    b = RunConfig.from_dict(json.loads(a.to_json()))
    assert a.config_hash() == b.config_hash()
    assert a.to_json() == b.to_json()
    c = a.replace(optimizer=OptimizerConfig(learning_rate=1e-3, seed=1))
    assert c.config_hash() != a.config_hash()


def test_unknown_keys_rejected():
    with raises(ValidationError, match="learning_rat"):
        RunConfig.from_dict({"optimizer": {"learning_rat": 0.1}})
    with raises(ValidationError, match="optimiser"):
        RunConfig.from_dict({"optimiser": {}})
    with raises(ValidationError):
        RunConfig.from_dict({"model": [1, 2]})
    with raises(ValidationError):
        RunConfig.from_json("[]")
    with raises(ValidationError):
        RunConfig.from_json("{not json")


def test_validation():
    with raises(ValidationError):
        RunConfig(prompt_variant="Chatty")
    with raises(ValidationError):
        OptimizerConfig(learning_rate=0).validate()
    with raises(ValidationError):
        OptimizerConfig(grad_clip=0).validate()
    with raises(ValidationError):
        DatasetConfig(kind="agd20k").validate()
    with raises(ValidationError):
        DatasetConfig(test_inventory="all").validate()
    with raises(ValidationError):
        RunConfig.from_dict({"parallel": {"eval_workers": 0}})
