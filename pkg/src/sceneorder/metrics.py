"""Tree, sequence and scene-level evaluation measures."""
from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np

from .data import Scene, points_in_polygon
from .geometry import Box2D, iou, project_topdown
from .ordering import OrderedSequence, SceneForest, SceneTree

KL_SMOOTHING = 1e-6


def level_sets(tree: SceneTree) -> list[set[int]]:
    """Node sets per depth, index 0 holding depth 1."""
    depth = tree.depth()
    if not depth:
        return []
    levels: list[set[int]] = [set() for _ in range(max(depth.values()))]
    for v, d in depth.items():
        levels[d - 1].add(v)
    return levels


def ahd(predicted: SceneTree, truth: SceneTree) -> float:
    """Mean per-depth Jaccard similarity, averaged over the ground-truth depths.

    Higher is better.  Predicted depths beyond the truth's are ignored;
    missing predicted levels score 0.
    """
    if set(predicted.parent) != set(truth.parent):
        raise ValueError("trees cover different object sets")
    true_levels = level_sets(truth)
    if not true_levels:
        return 1.0
    pred_levels = level_sets(predicted)
    total = 0.0
    for i, s in enumerate(true_levels):
        p = pred_levels[i] if i < len(pred_levels) else set()
        total += len(s & p) / len(s | p)
    return total / len(true_levels)


def _as_tokens(seq, class_ids, by):
    if isinstance(seq, OrderedSequence):
        if by == "class":
            if class_ids is None:
                raise ValueError("class_ids are needed to compare sequences by class")
            return seq.labels(class_ids)
        return seq.order
    return tuple(seq)


def inconsistency(seqs: Sequence, class_ids: Sequence[int] | None = None, by: str = "class") -> float:
    """Mean positional Hamming distance over all pairs of sequences.

    ``seqs`` holds :class:`OrderedSequence` objects (mapped to class labels
    via ``class_ids`` unless ``by="identity"``) or plain token sequences.
    """
    if len(seqs) == 0:
        raise ValueError("inconsistency of an empty sequence set")
    if by not in ("class", "identity"):
        raise ValueError(f"unknown comparison {by!r}")
    tokens = [_as_tokens(s, class_ids, by) for s in seqs]
    if len({len(t) for t in tokens}) > 1:
        raise ValueError("sequences differ in length")
    if len(tokens) == 1:
        return 0.0
    arr = np.array(tokens)
    total, pairs = 0, 0
    for i, j in itertools.combinations(range(len(arr)), 2):
        total += int(np.count_nonzero(arr[i] != arr[j]))
        pairs += 1
    return total / pairs


def diversity(forest: SceneForest) -> int:
    return len(forest)


def class_distribution(scenes: Iterable[Scene], n_classes: int) -> np.ndarray:
    counts = np.zeros(n_classes)
    for s in scenes:
        for o in s.objects:
            counts[o.class_id] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no objects to build a class distribution from")
    return counts / total


def categorical_kl(p, q, smoothing: float = KL_SMOOTHING) -> float:
    """KL(p || q) in nats.

    When q gives zero mass to a class that p uses, q is smoothed by
    ``smoothing`` and renormalised so the result stays finite.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distributions over different vocabularies: {p.shape} vs {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("probabilities must be non-negative")
    p = p / p.sum()
    q = q / q.sum()
    nz = p > 0
    if (q[nz] == 0).any():
        q = (q + smoothing) / (1.0 + smoothing * len(q))
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def _segment_hits_box(a, b, lo, hi) -> bool:
    # Liang-Barsky clip of segment ab against the open box (lo, hi)
    t0, t1 = 0.0, 1.0
    d = b - a
    for k in range(2):
        if abs(d[k]) < 1e-15:
            if a[k] <= lo[k] or a[k] >= hi[k]:
                return False
            continue
        ta, tb = (lo[k] - a[k]) / d[k], (hi[k] - a[k]) / d[k]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 >= t1:
            return False
    return True


def box_outside_floor(box: Box2D, floor, tolerance: float = 0.05) -> bool:
    """True when the box reaches more than ``tolerance`` beyond the polygon."""
    lo = np.array(box.min) + tolerance
    hi = np.array(box.max) - tolerance
    c = (np.array(box.min) + np.array(box.max)) / 2.0
    lo, hi = np.minimum(lo, c), np.maximum(hi, c)
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    if not points_in_polygon(corners, floor).all():
        return True
    poly = np.asarray(floor, dtype=float)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        if _segment_hits_box(a, b, lo, hi):
            return True
    return False


def scene_quality(scene: Scene, tolerance: float = 0.05, overlap_iou: float = 0.1) -> dict[str, float]:
    objs = scene.objects
    if not objs:
        return {"out_of_bounds_rate": 0.0, "pairwise_overlap_rate": 0.0}
    boxes = [project_topdown(o) for o in objs]
    oob = sum(box_outside_floor(b, scene.floor, tolerance) for b in boxes) / len(boxes)
    pairs = list(itertools.combinations(range(len(boxes)), 2))
    overlap = 0.0
    if pairs:
        overlap = sum(iou(boxes[i], boxes[j]) > overlap_iou for i, j in pairs) / len(pairs)
    return {"out_of_bounds_rate": float(oob), "pairwise_overlap_rate": float(overlap)}


def dataset_quality(scenes: Iterable[Scene], **kwargs) -> dict[str, float]:
    """Object-weighted OOB rate and pair-weighted overlap rate over many scenes."""
    n_obj = n_oob = n_pairs = n_overlap = 0
    for s in scenes:
        q = scene_quality(s, **kwargs)
        n = len(s.objects)
        p = n * (n - 1) // 2
        n_obj += n
        n_oob += q["out_of_bounds_rate"] * n
        n_pairs += p
        n_overlap += q["pairwise_overlap_rate"] * p
    return {"out_of_bounds_rate": n_oob / n_obj if n_obj else 0.0,
            "pairwise_overlap_rate": n_overlap / n_pairs if n_pairs else 0.0}
