"""Model checkpoints.

File layout: a magic line, one line of JSON manifest (kind, format version,
config, vocabulary hash, array shapes), then the arrays as ``.npz`` bytes.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .neural.models import CnnClassifier, GruClassifier, RnnlmClassifier
from .pipelines import NGRAM_KINDS, NGramPipeline

MAGIC = b"SMILES-SCREEN-CHECKPOINT\n"
FORMAT_VERSION = 1

_SEQUENCE = {"cnn": CnnClassifier, "gru": GruClassifier, "rnnlm": RnnlmClassifier}


class CheckpointError(ValueError):
    pass


def _manifest(kind: str, meta: dict, arrays: dict, config: dict | None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "vocab_hash": meta.get("vocab_ref"),
        "config": config or {},
        "shapes": {k: list(np.shape(v)) for k, v in sorted(arrays.items())},
        "meta": meta,
    }


def save_model(model, path: str | Path, config: dict | None = None) -> None:
    meta, arrays = model.get_state()
    manifest = _manifest(model.kind, meta, arrays, config)
    buf = io.BytesIO()
    np.savez(buf, **{k: np.asarray(v) for k, v in arrays.items()})
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(manifest, sort_keys=True, default=str).encode("utf-8") + b"\n")
        fh.write(buf.getvalue())


def read_manifest(path: str | Path) -> tuple[dict, bytes]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    end = blob.index(b"\n", len(MAGIC))
    manifest = json.loads(blob[len(MAGIC) : end])
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('format_version')}")
    return manifest, blob[end + 1 :]


def load_model(path: str | Path):
    manifest, payload = read_manifest(path)
    with np.load(io.BytesIO(payload), allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    for k, shape in manifest["shapes"].items():
        if list(arrays[k].shape) != shape:
            raise CheckpointError(f"{path}: array {k} has shape {arrays[k].shape}, manifest says {shape}")
    kind, meta = manifest["kind"], manifest["meta"]
    if kind in NGRAM_KINDS:
        return NGramPipeline.from_state(kind, meta, arrays)
    if kind in _SEQUENCE:
        return _SEQUENCE[kind].from_state(meta, arrays)
    raise CheckpointError(f"{path}: unknown model kind {kind!r}")
