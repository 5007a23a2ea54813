"""TIES merging of fine-tuned checkpoints over a shared base.

Per tensor: take each model's task vector (tuned - base), keep its
``ceil(density * n)`` largest-magnitude entries, elect a sign per element
from the weighted sum of the trimmed values, average only the values that
agree with the elected sign (weights renormalized over those models), and
add the result back to the base.

Checkpoint files are an 8-byte little-endian header length, a UTF-8 JSON
header ``{name: {"shape", "offset", "length"}}`` and raw little-endian
float32 buffers (offsets relative to the end of the header).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "TensorMap",
    "MergeConfig",
    "DEFAULT_WEIGHTS",
    "DEFAULT_DENSITY",
    "task_vector",
    "trim",
    "ties_merge_tensor",
    "ties_merge",
    "CheckpointReader",
    "save_checkpoint",
    "load_checkpoint",
    "merge_checkpoints",
]

TensorMap = dict[str, np.ndarray]

DEFAULT_WEIGHTS = (0.34, 0.33, 0.33)
DEFAULT_DENSITY = 0.8

_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class MergeConfig:
    """Merge hyperparameters.

    ``conflict="elect"`` is the standard sign election followed by a
    sign-agreeing mean; ``"max_magnitude"`` instead keeps, per element, the
    single trimmed value of largest weighted magnitude.
    """

    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    density: float = DEFAULT_DENSITY
    conflict: str = "elect"

    def __post_init__(self) -> None:
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if self.conflict not in ("elect", "max_magnitude"):
            raise ValueError(f"unknown conflict rule {self.conflict!r}")

    @classmethod
    def for_models(cls, n: int, **kwargs) -> MergeConfig:
        """Default 0.34/0.33/0.33 weights for three models, equal weights otherwise."""
        weights = DEFAULT_WEIGHTS if n == 3 else tuple([1.0 / n] * n)
        return cls(weights=weights, **kwargs)


def _check_compatible(base: Mapping[str, np.ndarray], other: Mapping[str, np.ndarray]) -> None:
    if set(base) != set(other):
        missing = sorted(set(base) ^ set(other))
        raise ValueError(f"tensor name mismatch: {missing[0]}")
    for name, arr in base.items():
        if tuple(arr.shape) != tuple(other[name].shape):
            raise ValueError(f"shape mismatch for tensor {name}: {arr.shape} vs {other[name].shape}")


def task_vector(base: Mapping[str, np.ndarray], tuned: Mapping[str, np.ndarray]) -> TensorMap:
    _check_compatible(base, tuned)
    return {
        name: (np.asarray(tuned[name], dtype=np.float32) - np.asarray(base[name], dtype=np.float32))
        for name in base
    }


def keep_count(density: float, n: int) -> int:
    # round first so 0.8 * 10 does not ceil to 9
    return min(n, math.ceil(round(density * n, 9)))


def _trim_array(delta: np.ndarray, density: float) -> np.ndarray:
    flat = np.asarray(delta).ravel()
    k = keep_count(density, flat.size)
    if k >= flat.size:
        return flat.reshape(delta.shape).copy()
    # stable sort on -|x| keeps the lower flat index first among equal magnitudes
    order = np.argsort(-np.abs(flat), kind="stable")
    out = np.zeros_like(flat)
    keep = order[:k]
    out[keep] = flat[keep]
    return out.reshape(delta.shape)


def trim(tv: Mapping[str, np.ndarray], density: float) -> TensorMap:
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    return {name: _trim_array(arr, density) for name, arr in tv.items()}


def ties_merge_tensor(
    base: np.ndarray, tuned: Sequence[np.ndarray], cfg: MergeConfig
) -> np.ndarray:
    """Merge one tensor; see the module docstring for the procedure."""
    if not tuned:
        raise ValueError("no models to merge")
    if len(cfg.weights) != len(tuned):
        raise ValueError(f"{len(cfg.weights)} weights for {len(tuned)} models")
    base64 = np.asarray(base, dtype=np.float32).astype(np.float64)
    values = np.stack([np.asarray(t, dtype=np.float32).astype(np.float64) for t in tuned])
    # the sign of a float64 difference of float32 values is always exact
    trimmed = np.stack([_trim_array(v - base64, cfg.density) for v in values])
    w = np.asarray(cfg.weights, dtype=np.float64).reshape((-1,) + (1,) * base64.ndim)

    if cfg.conflict == "max_magnitude":
        pick = np.argmax(np.abs(trimmed * w), axis=0)[None]
        chosen = np.take_along_axis(values, pick, axis=0)[0]
        hit = np.take_along_axis(trimmed, pick, axis=0)[0] != 0
        return np.where(hit, chosen, base64).astype(np.float32)

    sign = np.sign((trimmed * w).sum(axis=0))
    agree = (np.sign(trimmed) == sign) & (trimmed != 0)
    wa = w * agree
    denom = wa.sum(axis=0)
    # base + weighted mean of agreeing deltas == weighted mean of agreeing values;
    # clipping to their range makes agreement on one value exact
    mean = np.divide((values * wa).sum(axis=0), denom, out=np.zeros_like(base64), where=denom > 0)
    lo = np.where(agree, values, np.inf).min(axis=0)
    hi = np.where(agree, values, -np.inf).max(axis=0)
    merged = np.where(denom > 0, np.clip(mean, lo, hi), base64)
    return merged.astype(np.float32)


def ties_merge(
    base: Mapping[str, np.ndarray], tuned: Sequence[Mapping[str, np.ndarray]], cfg: MergeConfig
) -> TensorMap:
    if not tuned:
        raise ValueError("no models to merge")
    for model in tuned:
        _check_compatible(base, model)
    return {name: ties_merge_tensor(base[name], [m[name] for m in tuned], cfg) for name in sorted(base)}


# --- checkpoint files ----------------------------------------------------------


def _header_bytes(shapes: Mapping[str, tuple[int, ...]]) -> bytes:
    header = {}
    offset = 0
    for name in sorted(shapes):
        length = int(np.prod(shapes[name], dtype=np.int64)) * _DTYPE.itemsize
        header[name] = {"shape": list(shapes[name]), "offset": offset, "length": length}
        offset += length
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(tensors: Mapping[str, np.ndarray], path: str | Path) -> None:
    header = _header_bytes({k: tuple(v.shape) for k, v in tensors.items()})
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for name in sorted(tensors):
            fh.write(np.ascontiguousarray(tensors[name], dtype=_DTYPE).tobytes())


class CheckpointReader:
    """Lazy per-tensor access to a checkpoint file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            raw = fh.read(8)
            if len(raw) != 8:
                raise ValueError(f"{self.path}: truncated checkpoint header")
            (size,) = struct.unpack("<Q", raw)
            try:
                self.header = json.loads(fh.read(size).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ValueError(f"{self.path}: bad checkpoint header") from exc
        self._data_start = 8 + size

    def names(self) -> list[str]:
        return sorted(self.header)

    def shape(self, name: str) -> tuple[int, ...]:
        return tuple(self.header[name]["shape"])

    def read(self, name: str) -> np.ndarray:
        entry = self.header[name]
        count = entry["length"] // _DTYPE.itemsize
        with open(self.path, "rb") as fh:
            fh.seek(self._data_start + entry["offset"])
            data = np.fromfile(fh, dtype=_DTYPE, count=count)
        if data.size != count:
            raise ValueError(f"{self.path}: tensor {name} is truncated")
        return data.reshape(self.shape(name)).astype(np.float32)


def load_checkpoint(path: str | Path) -> TensorMap:
    reader = CheckpointReader(path)
    return {name: reader.read(name) for name in reader.names()}


def merge_checkpoints(
    base_path: str | Path, model_paths: Sequence[str | Path], cfg: MergeConfig, out_path: str | Path
) -> None:
    """Stream a TIES merge tensor by tensor into ``out_path``."""
    if not model_paths:
        raise ValueError("no models to merge")
    base = CheckpointReader(base_path)
    models = [CheckpointReader(p) for p in model_paths]
    names = base.names()
    for m in models:
        if m.names() != names:
            diff = sorted(set(names) ^ set(m.names()))
            raise ValueError(f"{m.path}: tensor name mismatch: {diff[0]}")
        for name in names:
            if m.shape(name) != base.shape(name):
                raise ValueError(f"{m.path}: shape mismatch for tensor {name}")
    header = _header_bytes({n: base.shape(n) for n in names})
    with open(out_path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for name in names:
            merged = ties_merge_tensor(base.read(name), [m.read(name) for m in models], cfg)
            fh.write(np.ascontiguousarray(merged, dtype=_DTYPE).tobytes())
