"""JSON checkpoint container for combiner parameters.

Layout::

    {"format": "fusesep-combiner", "version": 1,
     "config": {...}, "config_hash": "<sha256 prefix>",
     "layers": [{"name": "trunk0", "shape": [o, i, 3, 3],
                 "weight": [... row-major ...], "bias": [...]}, ...]}

Floats are written with ``repr`` precision, so a save/load round trip is
exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .network import CombinerConfig, CombinerError, CombinerParams

FORMAT = "fusesep-combiner"
VERSION = 1


def _layer_names(params: CombinerParams) -> list[str]:
    return [f"trunk{i}" for i in range(params.n_trunk)] + ["head_magnitude", "head_phase"]


def params_to_dict(params: CombinerParams) -> dict:
    layers = []
    for name, w, b in zip(_layer_names(params), params.weights, params.biases):
        layers.append(
            {
                "name": name,
                "shape": list(w.shape),
                "weight": w.ravel(order="C").tolist(),
                "bias": b.tolist(),
            }
        )
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": params.config.to_dict(),
        "config_hash": params.config.digest(),
        "layers": layers,
    }


def params_from_dict(d: dict) -> CombinerParams:
    if d.get("format") != FORMAT:
        raise CombinerError(f"not a combiner checkpoint (format={d.get('format')!r})")
    if d.get("version") != VERSION:
        raise CombinerError(f"unsupported checkpoint version {d.get('version')!r}")
    config = CombinerConfig.from_dict(d["config"])
    if d.get("config_hash") != config.digest():
        raise CombinerError("config hash mismatch; checkpoint is corrupt or edited")
    weights, biases = [], []
    for layer in d["layers"]:
        shape = tuple(layer["shape"])
        weights.append(np.asarray(layer["weight"], dtype=np.float64).reshape(shape))
        biases.append(np.asarray(layer["bias"], dtype=np.float64))
    return CombinerParams(config, weights, biases)


def save_params(params: CombinerParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path) -> CombinerParams:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CombinerError(f"{path}: invalid JSON ({exc})") from exc
    return params_from_dict(d)
