"""Model file format: one JSON document holding the config, seed,
normalization statistics, and base64-encoded little-endian float32 tensors."""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from . import FORMAT_VERSIONS
from .errors import SchemaError
from .evaluation import SeqModel
from .features import Normalization
from .network import SeqModelConfig, SeqModelParams, _tensor_shapes

MODEL_FORMAT = FORMAT_VERSIONS["model"]


def save_model(model: SeqModel, path, seed: int = 0, train_config: dict = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = model.params
    doc = {
        "format": MODEL_FORMAT,
        "config": params.config.to_dict(),
        "seed": int(seed),
        "train_config": train_config or {},
        "normalization": model.normalization.to_dict(),
        "tensors": {
            name: {
                "shape": list(t.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(t, dtype="<f4").tobytes()
                ).decode("ascii"),
            }
            for name, t in params.tensors.items()
        },
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def load_model(path) -> SeqModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise SchemaError(str(path), f"cannot read model file: {exc}")
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise SchemaError(f"{path}.format", f"expected {MODEL_FORMAT!r}")
    try:
        config = SeqModelConfig.from_dict(doc["config"])
        norm = Normalization.from_dict(doc["normalization"])
        raw = doc["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(str(path), f"bad model document: {exc}")
    tensors = {}
    for name, shape in _tensor_shapes(config).items():
        if name not in raw:
            raise SchemaError(f"tensors.{name}", "missing tensor")
        entry = raw[name]
        if tuple(entry["shape"]) != shape:
            raise SchemaError(
                f"tensors.{name}", f"shape {entry['shape']} does not match config {list(shape)}"
            )
        data = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f4")
        if data.size != int(np.prod(shape)):
            raise SchemaError(f"tensors.{name}", "payload size does not match shape")
        tensors[name] = data.reshape(shape).copy()
    return SeqModel(params=SeqModelParams(config, tensors), normalization=norm)
