"""Scalar features, attribute normalisation and object tokens."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..geometry import SceneObject

N_FREQ = 32
ATTRIBUTES = ("tx", "ty", "tz", "sx", "sy", "sz", "r")


def encode_scalar(h) -> np.ndarray:
    """(sin 2^k pi h, cos 2^k pi h) for k = 0..31, interleaved; shape (..., 64).

    ``2^k h`` is reduced modulo 2 before multiplying by pi.  Scaling by a power
    of two and the modulo are exact in binary floating point, so this equals
    the textbook formula while avoiding the precision loss of huge arguments.
    """
    h = np.asarray(h, dtype=float)
    scaled = np.mod(h[..., None] * 2.0 ** np.arange(N_FREQ), 2.0) * math.pi
    out = np.empty(h.shape + (2 * N_FREQ,))
    out[..., 0::2] = np.sin(scaled)
    out[..., 1::2] = np.cos(scaled)
    return out


def object_vector(obj: SceneObject) -> np.ndarray:
    return np.array([*obj.translation, *obj.size, obj.rotation], dtype=float)


@dataclass(frozen=True)
class Bounds:
    """Per-attribute ``[lo, hi]`` ranges mapped to ``[-1, 1]``."""
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != 7 or len(self.hi) != 7:
            raise ValueError("bounds need 7 entries")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("every upper bound must exceed its lower bound")

    @classmethod
    def fit(cls, vectors: np.ndarray, margin: float = 0.05) -> "Bounds":
        vectors = np.asarray(vectors, dtype=float)
        lo, hi = vectors.min(axis=0), vectors.max(axis=0)
        span = np.maximum(hi - lo, 1e-3)
        lo, hi = lo - margin * span, hi + margin * span
        return cls(tuple(map(float, lo)), tuple(map(float, hi)))

    def normalize(self, v: np.ndarray, clamp: bool = True) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        h = 2.0 * (np.asarray(v, dtype=float) - lo) / (hi - lo) - 1.0
        if clamp and (np.abs(h) > 1.0).any():
            warnings.warn("attribute outside normalisation bounds; clamping", RuntimeWarning, stacklevel=2)
            h = np.clip(h, -1.0, 1.0)
        return h

    def denormalize(self, h: np.ndarray) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + (np.asarray(h, dtype=float) + 1.0) * 0.5 * (hi - lo)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d) -> "Bounds":
        return cls(tuple(d["lo"]), tuple(d["hi"]))


def augmented_vectors(objects: Iterable[SceneObject], augmentation: str) -> np.ndarray:
    """Attribute vectors covering every pose the augmentation can produce."""
    vecs = np.array([object_vector(o) for o in objects])
    if augmentation == "none" or len(vecs) == 0:
        return vecs
    if augmentation == "right_angle":
        poses = [vecs]
        for k in range(1, 4):
            c, s = round(math.cos(k * math.pi / 2)), round(math.sin(k * math.pi / 2))
            e = vecs.copy()
            e[:, 0] = c * vecs[:, 0] - s * vecs[:, 2]
            e[:, 2] = s * vecs[:, 0] + c * vecs[:, 2]
            poses.append(e)
    else:
        r = np.hypot(vecs[:, 0], vecs[:, 2])
        lo, hi = vecs.copy(), vecs.copy()
        lo[:, 0], lo[:, 2] = -r, -r
        hi[:, 0], hi[:, 2] = r, r
        poses = [vecs, lo, hi]
    out = np.concatenate(poses)
    # any rotation augmentation can produce every yaw
    ends = np.repeat(out[:1], 2, axis=0)
    ends[:, 6] = (-math.pi, math.pi)
    return np.concatenate([out, ends])


def geometry_features(h: np.ndarray) -> np.ndarray:
    """Concatenated scalar encodings of normalised attributes, shape (..., 448)."""
    enc = encode_scalar(h)
    return enc.reshape(h.shape[:-1] + (7 * 2 * N_FREQ,))


def batch_attributes(objects: Sequence[SceneObject], bounds: Bounds) -> np.ndarray:
    if not objects:
        return np.zeros((0, 7))
    return bounds.normalize(np.array([object_vector(o) for o in objects]))
