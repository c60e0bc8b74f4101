"""Model and training hyper-parameters."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


def _from_dict(cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    typed = {}
    for f in fields(cls):
        if f.name in values:
            v = values[f.name]
            if isinstance(v, list):
                v = tuple(v)
            typed[f.name] = v
    return cls(**typed)


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int = 13
    token_dim: int = 512
    class_dim: int = 64
    hidden: int = 192
    layers: int = 6
    heads: int = 6
    mlp_ratio: int = 4
    dropout: float = 0.1
    vit_patch: int = 8
    vit_layers: int = 4
    vit_heads: int = 3
    vit_dim: int = 192
    vit_mlp_ratio: int = 6
    mask_resolution: int = 64
    mixture_k: int = 10
    n_bins: int = 256
    geometry_hidden: int = 256
    scale_floor: float = 1e-3
    mask_rate: float = 0.05
    noise_rate: float = 0.05
    max_len: int = 32

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ConfigError(f"hidden {self.hidden} is not divisible by heads {self.heads}")
        if self.vit_dim % self.vit_heads:
            raise ConfigError(f"vit_dim {self.vit_dim} is not divisible by vit_heads {self.vit_heads}")
        if self.mask_resolution % self.vit_patch:
            raise ConfigError("mask resolution must be a multiple of the patch size")
        if self.token_dim != self.class_dim + 7 * 64:
            raise ConfigError("token_dim must equal class_dim + 7 * 64")
        for name in ("dropout", "mask_rate", "noise_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        return _from_dict(cls, values)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults; ``full_scale()`` gives batch 128, 1000 epochs and continuous rotations."""
    batch_size: int = 32
    epochs: int = 200
    lr: float = 1e-4
    weight_decay: float = 0.01
    eval_every: int = 10
    strategy: str = "forest_bfs"
    augmentation: str = "right_angle"
    seed: int = 0
    max_steps: int | None = None
    bounds_margin: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, epochs and eval_every must be positive")
        if self.augmentation not in ("none", "right_angle", "continuous"):
            raise ConfigError(f"unknown augmentation {self.augmentation!r}")

    @classmethod
    def full_scale(cls, **changes) -> "TrainConfig":
        return dataclasses.replace(cls(batch_size=128, epochs=1000, augmentation="continuous"), **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        return _from_dict(cls, values)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)
