"""Autoregressive sampling, scene completion, rearrangement and asset retrieval."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import numerics as nx
from ..data import Scene, rasterize_floor
from ..geometry import SceneObject, wrap_angle
from ..numerics import no_grad
from ..ordering import Strategy, make_ordering
from . import mixture
from .encoding import object_vector
from .io import TrainedModel

MIN_SIZE = 1e-2


@dataclass(frozen=True)
class SampleResult:
    scene: Scene
    truncated: bool


def _class_probs(logits: np.ndarray, temperature: float) -> np.ndarray:
    if temperature <= 0:
        p = np.zeros_like(logits)
        p[int(np.argmax(logits))] = 1.0
        return p
    z = logits / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def sample_class(logits: np.ndarray, rng: np.random.Generator, temperature: float = 1.0) -> int:
    """Draw a class from softmax(logits / temperature); temperature 0 is argmax."""
    p = _class_probs(np.asarray(logits, dtype=float), temperature)
    if temperature <= 0:
        return int(np.argmax(p))
    return int(rng.choice(len(p), p=p))


class _Session:
    """Token prefix for one scene, re-decoded at every step."""

    def __init__(self, tm: TrainedModel, floor):
        self.tm = tm
        self.model = tm.model
        mask = rasterize_floor(floor, tm.frame)
        with no_grad():
            self.start = self.model.start_tokens(mask[None]).data.reshape(1, 1, -1)
        self.classes: list[int] = []
        self.attrs: list[np.ndarray] = []

    def __len__(self):
        return len(self.classes)

    def context(self) -> np.ndarray:
        with no_grad():
            seq = nx.Tensor(self.start)
            if self.classes:
                tok = self.model.object_tokens(np.array([self.classes]), np.array([self.attrs]))
                seq = nx.concat([seq, tok], axis=1)
            return self.model.decode(seq).data[0, -1]

    def class_logits(self, ctx: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.model.class_logits(nx.Tensor(ctx[None])).data[0]

    def geometry(self, ctx: np.ndarray, class_id: int):
        with no_grad():
            logits, mu, log_scale = self.model.geometry_params(nx.Tensor(ctx[None]), np.array([class_id]))
        return logits.data[0], mu.data[0], log_scale.data[0]

    def push(self, class_id: int, h: np.ndarray):
        self.classes.append(int(class_id))
        self.attrs.append(np.clip(np.asarray(h, dtype=float), -1.0, 1.0))

    def push_object(self, obj: SceneObject):
        self.push(obj.class_id, self.tm.bounds.normalize(object_vector(obj)))


def _to_object(tm: TrainedModel, class_id: int, h: np.ndarray) -> SceneObject:
    v = tm.bounds.denormalize(h)
    size = np.maximum(v[3:6], MIN_SIZE)
    return SceneObject(class_id, tuple(map(float, v[:3])), tuple(map(float, size)), wrap_angle(float(v[6])))


def _finish(tm: TrainedModel, floor, objects, room_type="room", scene_id=None) -> Scene:
    return Scene(tuple(objects), tuple(map(tuple, np.asarray(floor, dtype=float))), tm.classes,
                 room_type, scene_id)


def _generate(tm: TrainedModel, session: _Session, objects: list, rng, temperature, max_len):
    cfg = tm.config
    limit = cfg.max_len if max_len is None else min(max_len, cfg.max_len)
    while True:
        if len(session) >= limit:
            return True
        ctx = session.context()
        c = sample_class(session.class_logits(ctx), rng, temperature)
        if c == tm.model.end_class:
            return False
        logits, mu, log_scale = session.geometry(ctx, c)
        h = mixture.sample(logits, mu, log_scale, rng, cfg.scale_floor)
        session.push(c, h)
        objects.append(_to_object(tm, c, h))


def sample_scene(tm: TrainedModel, floor, rng: np.random.Generator, temperature: float = 1.0,
                 max_len: int | None = None, room_type: str = "room", scene_id: str | None = None) -> SampleResult:
    """Generate a furnished scene for a floor polygon until the end class is drawn."""
    session = _Session(tm, floor)
    objects: list[SceneObject] = []
    truncated = _generate(tm, session, objects, rng, temperature, max_len)
    return SampleResult(_finish(tm, floor, objects, room_type, scene_id), truncated)


def _bfs_order(objects: Sequence[SceneObject], floor, classes, rng) -> list[int]:
    if not objects:
        return []
    partial = Scene(tuple(objects), tuple(map(tuple, np.asarray(floor, dtype=float))), classes)
    return list(make_ordering(partial, Strategy.FOREST_BFS, rng).order)


def complete_scene(tm: TrainedModel, floor, partial: Sequence[SceneObject], rng: np.random.Generator,
                   temperature: float = 1.0, max_len: int | None = None,
                   room_type: str = "room", scene_id: str | None = None) -> SampleResult:
    """Keep the given objects as a forced prefix (ForestBFS order) and sample the rest."""
    if len(partial) > tm.config.max_len:
        raise ValueError(f"prefix of {len(partial)} objects exceeds max_len {tm.config.max_len}")
    session = _Session(tm, floor)
    objects = []
    for i in _bfs_order(partial, floor, tm.classes, rng):
        session.push_object(partial[i])
        objects.append(partial[i])
    truncated = _generate(tm, session, objects, rng, temperature, max_len)
    return SampleResult(_finish(tm, floor, objects, room_type, scene_id), truncated)


def rearrange(tm: TrainedModel, scene: Scene, targets: Sequence[int], rng: np.random.Generator) -> Scene:
    """Resample translation and yaw of ``targets`` given every other object.

    Non-targets are fed first in ForestBFS order; targets follow in the
    given order, each conditioned on all tokens before it.  Class and size
    are kept.  Object indices of the returned scene match the input.
    """
    targets = list(dict.fromkeys(int(t) for t in targets))
    if not targets:
        return scene
    n = len(scene.objects)
    if any(t < 0 or t >= n for t in targets):
        raise IndexError(f"target index out of range for a scene of {n} objects")
    keep = [i for i in range(n) if i not in set(targets)]
    session = _Session(tm, scene.floor)
    kept = [scene.objects[i] for i in keep]
    for j in _bfs_order(kept, scene.floor, tm.classes, rng):
        session.push_object(kept[j])
    new_objects = list(scene.objects)
    for t in targets:
        obj = scene.objects[t]
        ctx = session.context()
        logits, mu, log_scale = session.geometry(ctx, obj.class_id)
        h_new = mixture.sample(logits, mu, log_scale, rng, tm.config.scale_floor)
        v = tm.bounds.denormalize(h_new)
        moved = obj.replace(translation=tuple(map(float, v[:3])), rotation=wrap_angle(float(v[6])))
        session.push_object(moved)
        new_objects[t] = moved
    return scene.replace(objects=tuple(new_objects))


def next_class_distribution(tm: TrainedModel, floor, prefix: Sequence[SceneObject]) -> np.ndarray:
    """Softmax over classes (plus end) after feeding ``prefix`` in the given order."""
    session = _Session(tm, floor)
    for o in prefix:
        session.push_object(o)
    return _class_probs(session.class_logits(session.context()), 1.0)


def retrieve_asset(obj: SceneObject, catalog: Sequence[Mapping], classes: Sequence[str]) -> str:
    """Catalog asset of the object's class with the nearest size vector (ties: lowest id)."""
    name = classes[obj.class_id]
    best = None
    for entry in catalog:
        if entry["class"] != name:
            continue
        d = math.dist(obj.size, entry["size"])
        key = (d, str(entry["asset_id"]))
        if best is None or key < best:
            best = key
    if best is None:
        raise KeyError(f"no catalog asset of class {name!r}")
    return best[1]
