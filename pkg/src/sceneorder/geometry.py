"""Oriented furniture boxes, their top-down footprints, and pairwise distances.

Conventions: y is up, the ground plane is x-z, all lengths are meters and
yaw angles are radians about the y axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_LAMBDA = 0.02


def wrap_angle(r: float) -> float:
    """Map an angle into [-pi, pi); values already in range are returned untouched."""
    if -math.pi <= r < math.pi:
        return float(r)
    w = (r + math.pi) % (2.0 * math.pi) - math.pi
    # fmod can land exactly on +pi through rounding
    return -math.pi if w >= math.pi else float(w)


def yaw_matrix(r: float) -> np.ndarray:
    """2x2 rotation acting on (x, z) column vectors; exact at right angles."""
    quarter = r / (math.pi / 2)
    if abs(quarter - round(quarter)) < 1e-12:
        k = int(round(quarter)) % 4
        c, s = (1.0, 0.0, -1.0, 0.0)[k], (0.0, 1.0, 0.0, -1.0)[k]
    else:
        c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    translation: tuple[float, float, float]
    size: tuple[float, float, float]
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "rotation", wrap_angle(float(self.rotation)))
        if len(self.translation) != 3 or len(self.size) != 3:
            raise ValueError("translation and size must be 3-vectors")
        if min(self.size) <= 0:
            raise ValueError(f"size must be strictly positive, got {self.size}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")

    @property
    def volume(self) -> float:
        return self.size[0] * self.size[1] * self.size[2]

    @property
    def footprint_area(self) -> float:
        return self.size[0] * self.size[2]

    @property
    def center2d(self) -> np.ndarray:
        return np.array([self.translation[0], self.translation[2]])

    def footprint(self) -> np.ndarray:
        """The four rotated footprint corners as a (4, 2) array, counter-clockwise."""
        hx, hz = self.size[0] / 2.0, self.size[2] / 2.0
        corners = np.array([[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]])
        return corners @ yaw_matrix(self.rotation).T + self.center2d

    def replace(self, **changes) -> "SceneObject":
        fields = dict(class_id=self.class_id, translation=self.translation,
                      size=self.size, rotation=self.rotation)
        fields.update(changes)
        return SceneObject(**fields)


@dataclass(frozen=True)
class Box2D:
    min: tuple[float, float]
    max: tuple[float, float]

    def __post_init__(self):
        if self.min[0] > self.max[0] or self.min[1] > self.max[1]:
            raise ValueError(f"invalid box: min {self.min} exceeds max {self.max}")

    @property
    def area(self) -> float:
        return (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])

    @property
    def center(self) -> tuple[float, float]:
        return ((self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0)


def project_topdown(obj: SceneObject) -> Box2D:
    """Axis-aligned x-z bounding box of the yaw-rotated footprint."""
    pts = obj.footprint()
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return Box2D((float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1])))


def _intersection_area(a: Box2D, b: Box2D) -> float:
    w = min(a.max[0], b.max[0]) - max(a.min[0], b.min[0])
    h = min(a.max[1], b.max[1]) - max(a.min[1], b.min[1])
    return max(w, 0.0) * max(h, 0.0)


def iou(a: Box2D, b: Box2D) -> float:
    if a == b:
        return 1.0
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def giou(a: Box2D, b: Box2D) -> float:
    """Generalized IoU of two axis-aligned boxes, in [-1, 1].

    Zero-area boxes have IoU 0 with everything except an identical box.
    When the enclosing box itself has no area (collinear degenerate boxes)
    the penalty term is taken as 0.
    """
    if a == b:
        return 1.0
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    value = inter / union if union > 0 else 0.0
    c = Box2D((min(a.min[0], b.min[0]), min(a.min[1], b.min[1])),
              (max(a.max[0], b.max[0]), max(a.max[1], b.max[1])))
    if c.area > 0:
        value -= (c.area - union) / c.area
    return value


def giou_matrix(boxes: np.ndarray) -> np.ndarray:
    """Pairwise GIoU for an (N, 4) array of [xmin, zmin, xmax, zmax] boxes."""
    lo, hi = boxes[:, :2], boxes[:, 2:]
    area = np.prod(hi - lo, axis=1)
    inter_wh = np.clip(np.minimum(hi[:, None], hi[None]) - np.maximum(lo[:, None], lo[None]), 0, None)
    inter = inter_wh[..., 0] * inter_wh[..., 1]
    union = area[:, None] + area[None] - inter
    encl_wh = np.maximum(hi[:, None], hi[None]) - np.minimum(lo[:, None], lo[None])
    encl = encl_wh[..., 0] * encl_wh[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(union > 0, inter / union, 0.0)
        value = value - np.where(encl > 0, (encl - union) / encl, 0.0)
    same = np.all(boxes[:, None] == boxes[None], axis=2)
    return np.where(same, 1.0, value)


def boxes_array(objects: Sequence[SceneObject]) -> np.ndarray:
    out = np.empty((len(objects), 4))
    for i, obj in enumerate(objects):
        box = project_topdown(obj)
        out[i] = (*box.min, *box.max)
    return out


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray
    lam: float

    def __post_init__(self):
        m = self.entries
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"distance matrix must be square, got {m.shape}")

    def __len__(self):
        return self.entries.shape[0]


def floor_diagonal(floor: np.ndarray) -> float:
    floor = np.asarray(floor, dtype=float)
    return float(np.linalg.norm(floor.max(axis=0) - floor.min(axis=0)))


def build_distance_matrix(scene, lam: float = DEFAULT_LAMBDA,
                          normalization: str = "diagonal") -> DistanceMatrix:
    """Center distance plus ``lam * (1 - GIoU)`` between all object footprints.

    With ``normalization="diagonal"`` center distances are divided by the
    diagonal of the floor's bounding box so they fall in [0, 1].
    """
    objects = scene.objects
    if not objects:
        raise ValueError("empty scene")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    centers = np.array([o.center2d for o in objects])
    d = np.sqrt(((centers[:, None] - centers[None]) ** 2).sum(axis=2))
    if normalization == "diagonal":
        diag = floor_diagonal(scene.floor)
        if diag <= 0:
            raise ValueError("floor polygon has zero extent")
        d = d / diag
    elif normalization != "none":
        raise ValueError(f"unknown distance normalization {normalization!r}")
    m = d + lam * (1.0 - giou_matrix(boxes_array(objects)))
    m = (m + m.T) / 2.0
    np.fill_diagonal(m, 0.0)
    return DistanceMatrix(m, float(lam))
