"""On-disk sample format: little-endian float32 raw images plus a JSON header."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .physics import ProjectionPair

RAW_DTYPE = np.dtype("<f4")


def write_raw(path, image) -> None:
    np.ascontiguousarray(image, dtype=RAW_DTYPE).tofile(path)


def read_raw(path, shape) -> np.ndarray:
    data = np.fromfile(path, dtype=RAW_DTYPE)
    if data.size != shape[0] * shape[1]:
        raise ValueError(f"{path}: expected {shape[0] * shape[1]} values, found {data.size}")
    return data.reshape(shape).astype(float)


def write_meta(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def save_pair(pair: ProjectionPair, directory) -> Path:
    """Write ``m1.raw``, ``m2.raw``, ``gt.raw`` and ``meta.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_raw(d / "m1.raw", pair.m1)
    write_raw(d / "m2.raw", pair.m2)
    write_raw(d / "gt.raw", pair.gt.astype(float))
    meta = dict(pair.meta)
    meta.update(width=int(pair.shape[1]), height=int(pair.shape[0]),
                channels={"m1": "low voltage", "m2": "high voltage"})
    write_meta(d / "meta.json", meta)
    return d


def load_pair(directory) -> ProjectionPair:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    shape = (int(meta["height"]), int(meta["width"]))
    gt_path = d / "gt.raw"
    gt = read_raw(gt_path, shape) > 0.5 if gt_path.exists() else np.zeros(shape, bool)
    return ProjectionPair(read_raw(d / "m1.raw", shape), read_raw(d / "m2.raw", shape), gt, meta)
