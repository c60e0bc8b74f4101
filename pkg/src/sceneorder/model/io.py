"""Saving and loading trained generators."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import RasterFrame
from ..numerics import checkpoint
from .config import ModelConfig
from .encoding import Bounds
from .network import SceneModel


@dataclass
class TrainedModel:
    """A model together with everything needed to encode and decode scenes."""
    model: SceneModel
    bounds: Bounds
    classes: tuple[str, ...]
    frame: RasterFrame
    meta: dict = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.model.cfg


def state_arrays(model: SceneModel) -> dict[str, np.ndarray]:
    return {name: p.data for name, p in model.named_parameters()}


def load_state(model: SceneModel, arrays: dict[str, np.ndarray]):
    params = dict(model.named_parameters())
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise checkpoint.CheckpointError(
            f"parameter mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
    for name, p in params.items():
        if p.shape != arrays[name].shape:
            raise checkpoint.CheckpointError(f"{name}: expected shape {p.shape}, found {arrays[name].shape}")
        p.data[...] = arrays[name]


def to_bytes(tm: TrainedModel, arrays: dict[str, np.ndarray] | None = None) -> bytes:
    meta = {
        "model_config": tm.model.cfg.to_dict(),
        "bounds": tm.bounds.to_dict(),
        "classes": list(tm.classes),
        "raster_frame": {"half_extent": tm.frame.half_extent, "resolution": tm.frame.resolution},
        "info": tm.meta,
    }
    return checkpoint.dumps(arrays if arrays is not None else state_arrays(tm.model), meta)


def save(path, tm: TrainedModel, arrays: dict[str, np.ndarray] | None = None):
    Path(path).write_bytes(to_bytes(tm, arrays))


def load(path) -> TrainedModel:
    arrays, meta = checkpoint.load(path)
    try:
        cfg = ModelConfig.from_dict(meta["model_config"])
        bounds = Bounds.from_dict(meta["bounds"])
        frame = RasterFrame(**meta["raster_frame"])
        classes = tuple(meta["classes"])
    except (KeyError, TypeError) as exc:
        raise checkpoint.CheckpointError(f"checkpoint metadata incomplete: {exc}") from None
    model = SceneModel(cfg, seed=0)
    load_state(model, arrays)
    model.eval()
    return TrainedModel(model, bounds, classes, frame, meta.get("info", {}))
