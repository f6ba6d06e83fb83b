"""JSON checkpoints of named tensors: ``{"tags": {...}, "tensors": {name: {"shape", "data"}}}``."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def dump_tensors(tensors: dict[str, np.ndarray], tags: dict | None = None) -> dict:
    return {
        "tags": dict(tags or {}),
        "tensors": {
            name: {"shape": list(np.shape(a)), "data": np.asarray(a, dtype=float).ravel().tolist()}
            for name, a in tensors.items()
        },
    }


def parse_tensors(doc: dict) -> tuple[dict[str, np.ndarray], dict]:
    tensors = {}
    for name, entry in doc["tensors"].items():
        data = np.asarray(entry["data"], dtype=float)
        shape = tuple(entry["shape"])
        if data.size != int(np.prod(shape)):
            raise ValueError(f"{name}: {data.size} values do not fill shape {shape}")
        tensors[name] = data.reshape(shape)
    return tensors, doc.get("tags", {})


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], tags: dict | None = None) -> None:
    Path(path).write_text(json.dumps(dump_tensors(tensors, tags)))


def load_checkpoint(path: str | Path, expect_tags: dict | None = None) -> tuple[dict[str, np.ndarray], dict]:
    tensors, tags = parse_tensors(json.loads(Path(path).read_text()))
    for key, value in (expect_tags or {}).items():
        if tags.get(key) != value:
            raise ValueError(f"checkpoint tag {key}={tags.get(key)!r}, expected {value!r}")
    return tensors, tags
