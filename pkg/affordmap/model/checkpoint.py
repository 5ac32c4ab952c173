"""Single-file checkpoints.

A checkpoint is a zip archive with

- ``config.json``: the model config as canonical JSON,
- ``params.bin``: every parameter as raw little-endian float32, back to back,
- ``manifest.json``: ``[{"name", "shape", "offset", "nbytes"}, ...]`` in blob order,
- ``state.json``: training counters,
- ``vocab.json``: the tokenizer vocabulary.

Loading rebuilds the model from the stored config and checks every manifest
entry against it before any weight is copied.
"""
from __future__ import annotations

import json
import logging
import os
import zipfile
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import torch

from affordmap.basic import CheckpointError, canonical_json
from affordmap.data.tokenizer import Vocabulary
from affordmap.model.config import ModelConfig
from affordmap.model.network import AffordanceModel


__all__ = ["save_checkpoint", "load_checkpoint", "read_manifest", "MEMBERS", "BLOB_DTYPE"]


logger = logging.getLogger("affordmap.model.checkpoint")

PathLike = Union[str, "os.PathLike[str]"]

MEMBERS = ("config.json", "manifest.json", "params.bin", "state.json", "vocab.json")
BLOB_DTYPE = np.dtype("<f4")


def save_checkpoint(
    path: PathLike,
    model: AffordanceModel,
    vocab: Vocabulary,
    state: Optional[Dict[str, Any]] = None,
) -> None:
    manifest: List[Dict[str, Any]] = []
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        data = tensor.detach().cpu().numpy().astype(BLOB_DTYPE).tobytes(order="C")
        manifest.append({
            "name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(data),
        })
        chunks.append(data)
        offset += len(data)

    path = os.fspath(path)
    tmp = path + ".tmp"
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        archive.writestr("config.json", canonical_json(model.cfg.to_dict()))
        archive.writestr("manifest.json", canonical_json(manifest))
        archive.writestr("params.bin", b"".join(chunks))
        archive.writestr("state.json", canonical_json(state or {}))
        archive.writestr("vocab.json", canonical_json(vocab.to_dict()))
    os.replace(tmp, path)
    logger.info("Wrote checkpoint with %s tensors (%s bytes) to %s", len(manifest), offset, path)


def _read_json(archive: zipfile.ZipFile, member: str) -> Any:
    try:
        return json.loads(archive.read(member).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as err:
        raise CheckpointError(f"Checkpoint member {member} is not valid JSON: {err}") from err


def read_manifest(path: PathLike) -> List[Dict[str, Any]]:
    with zipfile.ZipFile(os.fspath(path)) as archive:
        return _read_json(archive, "manifest.json")


def _validate_manifest(
    manifest: Any, expected: Dict[str, torch.Tensor], blob_size: int
) -> None:
    if not isinstance(manifest, list):
        raise CheckpointError("Checkpoint manifest must be a list of blob entries.")
    offset = 0
    seen = set()
    for entry in manifest:
        name = entry.get("name") if isinstance(entry, dict) else None
        if name not in expected:
            raise CheckpointError(f"Blob '{name}' does not belong to the configured model.")
        want = list(expected[name].shape)
        nbytes = int(np.prod(want, dtype=np.int64)) * BLOB_DTYPE.itemsize
        if entry.get("shape") != want:
            raise CheckpointError(f"Blob '{name}' has shape {entry.get('shape')}, config implies {want}.")
        if entry.get("offset") != offset or entry.get("nbytes") != nbytes:
            raise CheckpointError(
                f"Blob '{name}' at offset {entry.get('offset')} with {entry.get('nbytes')} bytes; "
                f"expected offset {offset} with {nbytes} bytes."
            )
        if offset + nbytes > blob_size:
            raise CheckpointError(f"Blob '{name}' runs past the end of params.bin.")
        seen.add(name)
        offset += nbytes
    for name in expected:
        if name not in seen:
            raise CheckpointError(f"Blob '{name}' is missing from the checkpoint.")
    if offset != blob_size:
        raise CheckpointError(f"params.bin has {blob_size - offset} trailing bytes.")


def load_checkpoint(
    path: PathLike, expected_config: Optional[ModelConfig] = None
) -> Tuple[AffordanceModel, Vocabulary, Dict[str, Any]]:
    path = os.fspath(path)
    if not zipfile.is_zipfile(path):
        raise CheckpointError(f"{path} is not a checkpoint archive.")
    with zipfile.ZipFile(path) as archive:
        missing = [m for m in MEMBERS if m not in archive.namelist()]
        if missing:
            raise CheckpointError(f"Checkpoint {path} lacks {missing}.")
        try:
            cfg = ModelConfig.from_dict(_read_json(archive, "config.json"))
        except (TypeError, ValueError) as err:
            raise CheckpointError(f"Checkpoint config is invalid: {err}") from err
        if expected_config is not None and expected_config != cfg:
            raise CheckpointError("Checkpoint config does not match the requested model config.")
        manifest = _read_json(archive, "manifest.json")
        blob = archive.read("params.bin")
        state = _read_json(archive, "state.json")
        vocab = Vocabulary.from_dict(_read_json(archive, "vocab.json"))

    if len(vocab) > cfg.vocab_size:
        raise CheckpointError(f"Vocabulary of {len(vocab)} words exceeds vocab_size {cfg.vocab_size}.")
    model = AffordanceModel(cfg)
    params = model.state_dict()
    _validate_manifest(manifest, params, len(blob))
    loaded = {}
    for entry in manifest:
        values = np.frombuffer(blob, dtype=BLOB_DTYPE, count=int(entry["nbytes"]) // 4, offset=entry["offset"])
        loaded[entry["name"]] = torch.from_numpy(values.reshape(entry["shape"]).copy()).to(model.dtype)
    model.load_state_dict(loaded)
    model.eval()
    logger.info("Loaded checkpoint %s (%s tensors)", path, len(manifest))
    return model, vocab, state
