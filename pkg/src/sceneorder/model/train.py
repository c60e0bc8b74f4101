"""Denoising training with per-epoch re-ordering and rotation augmentation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..data import RasterFrame, Scene, rasterize_floor, rotate_scene
from ..numerics import AdamW, no_grad
from ..ordering import Strategy, class_frequencies, make_ordering, parse_scene
from .config import ModelConfig, TrainConfig
from .encoding import Bounds, augmented_vectors, batch_attributes
from .io import TrainedModel, load_state, state_arrays
from .network import Batch, SceneModel

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, epoch: int, detail: str):
        super().__init__(f"non-finite loss at step {step} (epoch {epoch}): {detail}")
        self.step = step
        self.epoch = epoch


@dataclass
class EpochRecord:
    epoch: int
    step: int
    train_nll: float
    val_nll: float | None = None
    class_accuracy: float | None = None


@dataclass
class TrainResult:
    trained: TrainedModel
    history: list[EpochRecord]
    best_epoch: int
    best_val_nll: float
    best_arrays: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def evaluations(self) -> list[EpochRecord]:
        return [r for r in self.history if r.val_nll is not None]


class SceneEncoder:
    """Turns scenes into padded training batches for one model setup."""

    def __init__(self, classes: Sequence[str], bounds: Bounds, frame: RasterFrame, cfg: ModelConfig,
                 strategy: str = "forest_bfs", class_frequency=None):
        self.classes = tuple(classes)
        self.bounds = bounds
        self.frame = frame
        self.cfg = cfg
        self.strategy = Strategy.parse(strategy)
        self.class_frequency = class_frequency
        self._parsed: dict[int, object] = {}
        self._masks: dict[tuple, np.ndarray] = {}

    def mask(self, scene: Scene, key=None) -> np.ndarray:
        if key is not None and key in self._masks:
            return self._masks[key]
        m = rasterize_floor(scene.floor, self.frame)
        if key is not None:
            self._masks[key] = m
        return m

    def order(self, scene: Scene, rng, cache_key=None) -> list[int]:
        if not scene.objects:
            return []
        parsed = None
        if self.strategy in (Strategy.TREE_BFS, Strategy.FOREST_BFS, Strategy.FOREST_DFS):
            if cache_key is not None and cache_key in self._parsed:
                parsed = self._parsed[cache_key]
            else:
                parsed = parse_scene(scene)
                if cache_key is not None:
                    self._parsed[cache_key] = parsed
        seq = make_ordering(scene, self.strategy, rng, parsed=parsed, class_frequency=self.class_frequency)
        return list(seq.order)

    def batch(self, items: Sequence[tuple[Scene, list[int], np.ndarray]]) -> Batch:
        """Pad ``(scene, order, mask)`` triples into one batch."""
        n = max(len(order) for _, order, _ in items)
        if n > self.cfg.max_len:
            raise ValueError(f"scene with {n} objects exceeds max_len {self.cfg.max_len}")
        b = len(items)
        classes = np.zeros((b, n), dtype=int)
        attrs = np.zeros((b, n, 7))
        lengths = np.zeros(b, dtype=int)
        masks = np.zeros((b, self.frame.resolution, self.frame.resolution))
        for i, (scene, order, mask) in enumerate(items):
            objs = [scene.objects[j] for j in order]
            lengths[i] = len(objs)
            classes[i, :len(objs)] = [o.class_id for o in objs]
            attrs[i, :len(objs)] = batch_attributes(objs, self.bounds)
            masks[i] = mask
        return Batch(masks, classes, attrs, lengths)


def fit_bounds(scenes: Sequence[Scene], augmentation: str, margin: float) -> Bounds:
    objs = [o for s in scenes for o in s.objects]
    if not objs:
        raise ValueError("training scenes contain no objects")
    return Bounds.fit(augmented_vectors(objs, augmentation), margin)


def _augment(scene: Scene, augmentation: str, rng) -> tuple[Scene, int | float]:
    if augmentation == "none":
        return scene, 0
    if augmentation == "right_angle":
        k = int(rng.integers(4))
        return (rotate_scene(scene, k * math.pi / 2) if k else scene), k
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    return rotate_scene(scene, angle), angle


def evaluate_nll(model: SceneModel, encoder: SceneEncoder, scenes: Sequence[Scene], seed: int = 0,
                 batch_size: int = 32) -> tuple[float, float]:
    """Mean per-scene NLL and class accuracy without corruption or dropout."""
    was_training = model.training
    model.eval()
    total, acc_sum, count = 0.0, 0.0, 0
    try:
        with no_grad():
            for lo in range(0, len(scenes), batch_size):
                chunk = scenes[lo:lo + batch_size]
                items = []
                for k, s in enumerate(chunk):
                    rng = np.random.default_rng([seed, lo + k])
                    items.append((s, encoder.order(s, rng, ("val", lo + k)), encoder.mask(s, ("val", lo + k))))
                res = model.nll(encoder.batch(items), corrupt_inputs=False)
                total += float(res.total.data) * len(chunk)
                acc_sum += res.accuracy * len(chunk)
                count += len(chunk)
    finally:
        model.train(was_training)
    return total / count, acc_sum / count


def train(train_scenes: Sequence[Scene], val_scenes: Sequence[Scene] | None = None,
          model_config: ModelConfig | None = None, train_config: TrainConfig | None = None,
          frame: RasterFrame | None = None,
          progress: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train a generator and return the best-validation checkpoint.

    Each epoch re-derives every scene's ordering (fresh forest sample and
    sibling shuffle), applies whole-scene rotation augmentation, corrupts
    the inputs and takes one optimiser step per batch.  Every
    ``eval_every`` epochs the validation NLL is measured and the best
    parameters are kept.
    """
    tc = train_config or TrainConfig()
    if not train_scenes:
        raise ValueError("no training scenes")
    classes = train_scenes[0].classes
    if any(s.classes != classes for s in train_scenes):
        raise ValueError("training scenes use different class vocabularies")
    mc = model_config or ModelConfig()
    if mc.n_classes != len(classes):
        mc = mc.replace(n_classes=len(classes))
    val_scenes = list(val_scenes) if val_scenes else list(train_scenes)
    if frame is None:
        frame = RasterFrame.from_scenes(list(train_scenes) + val_scenes, mc.mask_resolution)
    bounds = fit_bounds(train_scenes, tc.augmentation, tc.bounds_margin)
    freq = class_frequencies(train_scenes)
    encoder = SceneEncoder(classes, bounds, frame, mc, tc.strategy, freq)

    model = SceneModel(mc, seed=tc.seed)
    model.train()
    model.set_rng(np.random.default_rng([tc.seed, 1]))
    opt = AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    history: list[EpochRecord] = []
    best_val, best_epoch, best_arrays = math.inf, 0, None
    step = 0
    n = len(train_scenes)
    done = False
    window: list[float] = []
    for epoch in range(1, tc.epochs + 1):
        rng = np.random.default_rng([tc.seed, 2, epoch])
        perm = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, tc.batch_size):
            items = []
            for idx in perm[lo:lo + tc.batch_size]:
                scene, pose = _augment(train_scenes[idx], tc.augmentation, rng)
                order = encoder.order(scene, rng, ("train", int(idx)))
                key = ("train", int(idx), pose) if tc.augmentation != "continuous" else None
                items.append((scene, order, encoder.mask(scene, key)))
            batch = encoder.batch(items)
            res = model.nll(batch, rng)
            value = float(res.total.data)
            if not math.isfinite(value):
                raise TrainingDiverged(step + 1, epoch,
                                       f"class_nll={res.class_nll}, geometry_nll={res.geometry_nll}")
            opt.zero_grad()
            res.total.backward()
            opt.step()
            step += 1
            epoch_losses.append(value)
            if tc.max_steps is not None and step >= tc.max_steps:
                done = True
                break
        window.extend(epoch_losses)
        record = EpochRecord(epoch, step, float(np.mean(epoch_losses)))
        if epoch % tc.eval_every == 0 or done or epoch == tc.epochs:
            record.train_nll = float(np.mean(window))
            window = []
            record.val_nll, record.class_accuracy = evaluate_nll(model, encoder, val_scenes, tc.seed)
            if record.val_nll < best_val:
                best_val, best_epoch = record.val_nll, epoch
                best_arrays = {k: v.copy() for k, v in state_arrays(model).items()}
            log.info("epoch %d step %d train %.4f val %.4f", epoch, step, record.train_nll, record.val_nll)
        history.append(record)
        if progress is not None:
            progress(record)
        if done:
            break

    load_state(model, best_arrays)
    model.eval()
    meta = {"train_config": tc.to_dict(), "best_epoch": best_epoch, "best_val_nll": best_val, "steps": step}
    trained = TrainedModel(model, bounds, classes, frame, meta)
    return TrainResult(trained, history, best_epoch, best_val, best_arrays)


def write_learning_curve(path, history: Sequence[EpochRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "step", "train_nll", "val_nll", "class_accuracy"])
        for r in history:
            w.writerow([r.epoch, r.step, repr(r.train_nll),
                        "" if r.val_nll is None else repr(r.val_nll),
                        "" if r.class_accuracy is None else repr(r.class_accuracy)])
