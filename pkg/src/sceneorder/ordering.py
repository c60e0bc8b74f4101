"""From unordered object sets to ordered sequences.

Objects are clustered with DBSCAN over a precomputed distance matrix, each
cluster hangs under its largest member, and outliers may attach to any cluster
head or to the virtual root.  Trees are then flattened by a sibling-shuffled
breadth-first or depth-first walk.
"""
from __future__ import annotations

import enum
import itertools
import math
import zlib
from collections import Counter, deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import DEFAULT_LAMBDA, DistanceMatrix, build_distance_matrix

ROOT = -1
DEFAULT_EPS = 0.15
DEFAULT_MIN_SAMPLES = 2
FOREST_CAP = 256


class Strategy(str, enum.Enum):
    RANDOM_SINGLE = "random_single"
    FIXED = "fixed"
    TREE_BFS = "tree_bfs"
    RANDOM_MULTIPLE = "random_multiple"
    FOREST_DFS = "forest_dfs"
    FOREST_BFS = "forest_bfs"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_").replace("+", "_")
        aliases = {"randomsingle": "random_single", "randommultiple": "random_multiple",
                   "treebfs": "tree_bfs", "forestdfs": "forest_dfs", "forestbfs": "forest_bfs"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown ordering strategy {value!r}") from None


def dbscan(m: DistanceMatrix | np.ndarray, eps: float = DEFAULT_EPS,
           min_samples: int = DEFAULT_MIN_SAMPLES) -> np.ndarray:
    """DBSCAN on a precomputed distance matrix.

    Points are visited in ascending index order; a border point reachable from
    several clusters stays with the first one that claims it.  Returns integer
    labels, ``-1`` for noise.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_samples < 1:
        raise ValueError("min_samples must be at least 1")
    d = m.entries if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=float)
    n = d.shape[0]
    neighbors = [np.flatnonzero(d[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_samples for nb in neighbors], dtype=bool)
    labels = np.full(n, -1, dtype=int)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in neighbors[p]:
                if labels[q] == -1:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    return labels


@dataclass(frozen=True)
class SceneTree:
    """Virtual-rooted tree over object indices; ``parent[v] == -1`` means v hangs off the root."""
    parent: Mapping[int, int]
    n_objects: int
    heads: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parent", dict(sorted((int(k), int(v)) for k, v in self.parent.items())))
        self.validate()

    def validate(self):
        for v, p in self.parent.items():
            if not 0 <= v < self.n_objects:
                raise ValueError(f"node {v} outside 0..{self.n_objects - 1}")
            if p != ROOT and p not in self.parent:
                raise ValueError(f"node {v} has parent {p} which is not in the tree")
        # acyclic: every walk upwards must reach the root
        for v in self.parent:
            seen = set()
            while v != ROOT:
                if v in seen:
                    raise ValueError("tree contains a cycle")
                seen.add(v)
                v = self.parent[v]

    @property
    def nodes(self) -> list[int]:
        return list(self.parent)

    @property
    def is_complete(self) -> bool:
        return len(self.parent) == self.n_objects

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {ROOT: []}
        for v in self.parent:
            out.setdefault(v, [])
        for v, p in self.parent.items():
            out[p].append(v)
        return out

    def depth(self) -> dict[int, int]:
        depth = {}
        for v in self.parent:
            d, u = 0, v
            while u != ROOT:
                d += 1
                u = self.parent[u]
            depth[v] = d
        return depth

    def with_parents(self, extra: Mapping[int, int]) -> "SceneTree":
        parent = dict(self.parent)
        parent.update(extra)
        return SceneTree(parent, self.n_objects, self.heads)

    def to_json(self, class_names: Sequence[str] | None = None) -> dict:
        doc = {"n_objects": self.n_objects, "heads": list(self.heads),
               "tree": {str(k): v for k, v in self.parent.items()}}
        if class_names is not None:
            doc["classes"] = list(class_names)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "SceneTree":
        return cls({int(k): int(v) for k, v in doc["tree"].items()}, int(doc["n_objects"]),
                   tuple(doc.get("heads", ())))

    def to_dot(self, class_names: Sequence[str] | None = None, name: str = "scene_tree") -> str:
        lines = [f"digraph {name} {{", '  root [label="root", shape=box];']
        for v in self.parent:
            label = f"{v}:{class_names[v]}" if class_names is not None else str(v)
            lines.append(f'  n{v} [label="{label}"];')
        for v, p in self.parent.items():
            lines.append(f"  {'root' if p == ROOT else f'n{p}'} -> n{v};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _largest(objects, members: Iterable[int]) -> int:
    # volume, then footprint, then lower index
    return min(members, key=lambda i: (-objects[i].volume, -objects[i].footprint_area, i))


def set2tree(scene, labels: Sequence[int]) -> tuple[SceneTree, list[int]]:
    """Hang every cluster under its largest object; return the tree and the outliers."""
    labels = np.asarray(labels)
    if len(labels) != len(scene.objects):
        raise ValueError(f"{len(labels)} labels for {len(scene.objects)} objects")
    parent: dict[int, int] = {}
    heads = []
    for lab in sorted(set(int(v) for v in labels) - {-1}):
        members = [int(i) for i in np.flatnonzero(labels == lab)]
        head = _largest(scene.objects, members)
        heads.append(head)
        parent[head] = ROOT
        for i in members:
            if i != head:
                parent[i] = head
    outliers = [int(i) for i in np.flatnonzero(labels == -1)]
    return SceneTree(parent, len(scene.objects), tuple(heads)), outliers


@dataclass(frozen=True)
class SceneForest:
    base: SceneTree
    outliers: tuple[int, ...]
    parent_choices: tuple[tuple[int, ...], ...]
    pseudocode_literal: bool = False
    cap: int = FOREST_CAP

    @property
    def full_size(self) -> int:
        if self.pseudocode_literal:
            return sum(len(c) for c in self.parent_choices)
        return math.prod(len(c) for c in self.parent_choices)

    def __len__(self):
        return min(self.full_size, self.cap)

    def members(self) -> list[SceneTree]:
        """Enumerate member trees, at most ``cap`` of them.

        In literal mode each member adds exactly one outlier to the base tree
        (so members are incomplete when there are several outliers) and an
        outlier-free forest is empty.
        """
        if self.pseudocode_literal:
            out = []
            for o, choices in zip(self.outliers, self.parent_choices):
                for p in choices:
                    out.append(self.base.with_parents({o: p}))
            return out[: self.cap]
        combos = itertools.islice(itertools.product(*self.parent_choices), self.cap)
        return [self.base.with_parents(dict(zip(self.outliers, c))) for c in combos]

    def to_json(self, class_names: Sequence[str] | None = None) -> dict:
        doc = {"n_objects": self.base.n_objects,
               "base": {str(k): v for k, v in self.base.parent.items()},
               "heads": list(self.base.heads),
               "outliers": list(self.outliers),
               "parent_choices": {str(o): list(c) for o, c in zip(self.outliers, self.parent_choices)},
               "size": self.full_size}
        if class_names is not None:
            doc["classes"] = list(class_names)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "SceneForest":
        base = SceneTree({int(k): int(v) for k, v in doc["base"].items()}, int(doc["n_objects"]),
                         tuple(doc.get("heads", ())))
        outliers = tuple(int(v) for v in doc["outliers"])
        choices = tuple(tuple(doc["parent_choices"][str(o)]) for o in outliers)
        return cls(base, outliers, choices)

    def to_dot(self, class_names: Sequence[str] | None = None) -> str:
        text = self.base.to_dot(class_names, name="scene_forest").rstrip().rstrip("}")
        lines = [text.rstrip()]
        for o, choices in zip(self.outliers, self.parent_choices):
            label = f"{o}:{class_names[o]}" if class_names is not None else str(o)
            lines.append(f'  n{o} [label="{label}", style=dashed];')
            for p in choices:
                lines.append(f"  {'root' if p == ROOT else f'n{p}'} -> n{o} [style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def tree2forest(base: SceneTree, outliers: Sequence[int], pseudocode_literal: bool = False,
                cap: int = FOREST_CAP) -> SceneForest:
    outliers = tuple(int(o) for o in outliers)
    overlap = set(outliers) & set(base.parent)
    if overlap:
        raise ValueError(f"outliers {sorted(overlap)} already placed in the base tree")
    choices = tuple(tuple(base.heads) + (ROOT,) for _ in outliers)
    return SceneForest(base, outliers, choices, pseudocode_literal, cap)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_tree(forest: SceneForest, rng_seed=None) -> SceneTree:
    """Pick one member tree uniformly: each outlier draws its parent independently."""
    rng = _rng(rng_seed)
    if forest.pseudocode_literal:
        members = forest.members()
        if not members:
            return forest.base
        return members[int(rng.integers(len(members)))]
    extra = {o: c[int(rng.integers(len(c)))] for o, c in zip(forest.outliers, forest.parent_choices)}
    return forest.base.with_parents(extra)


@dataclass(frozen=True)
class OrderedSequence:
    order: tuple[int, ...]
    strategy: Strategy
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"order {self.order} is not a permutation of 0..{len(self.order) - 1}")

    def __len__(self):
        return len(self.order)

    def labels(self, class_ids: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(class_ids[i]) for i in self.order)

    def with_seed(self, seed) -> "OrderedSequence":
        return OrderedSequence(self.order, self.strategy, _seed_int(seed))


def linearize(tree: SceneTree, traversal: str = "bfs", rng_seed=None,
              strategy: Strategy = Strategy.FOREST_BFS, sibling_keys=None) -> OrderedSequence:
    """Shuffle siblings, then walk the tree level-order (``bfs``) or pre-order (``dfs``).

    Siblings are sorted by a random key per object, which is a uniform
    shuffle under every parent.  Passing the same ``sibling_keys`` to several
    trees of one forest keeps their shared siblings in the same relative order.
    """
    if sibling_keys is None:
        sibling_keys = _rng(rng_seed).random(tree.n_objects)
    kids = tree.children()
    for v in kids:
        kids[v].sort(key=lambda c: (sibling_keys[c], c))
    order: list[int] = []
    traversal = traversal.lower()
    if traversal == "bfs":
        queue = deque(kids[ROOT])
        while queue:
            v = queue.popleft()
            order.append(v)
            queue.extend(kids[v])
    elif traversal == "dfs":
        stack = list(reversed(kids[ROOT]))
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(kids[v]))
    else:
        raise ValueError(f"unknown traversal {traversal!r}")
    return OrderedSequence(tuple(order), strategy, _seed_int(rng_seed))


@dataclass(frozen=True)
class ParseResult:
    labels: np.ndarray
    tree: SceneTree
    outliers: tuple[int, ...]
    forest: SceneForest

    def single_tree(self) -> SceneTree:
        """The base tree with every outlier attached directly to the root."""
        return self.tree.with_parents({o: ROOT for o in self.outliers})


def parse_scene(scene, lam: float = DEFAULT_LAMBDA, eps: float = DEFAULT_EPS,
                min_samples: int = DEFAULT_MIN_SAMPLES, normalization: str = "diagonal",
                pseudocode_literal: bool = False) -> ParseResult:
    m = build_distance_matrix(scene, lam, normalization)
    labels = dbscan(m, eps, min_samples)
    tree, outliers = set2tree(scene, labels)
    forest = tree2forest(tree, outliers, pseudocode_literal)
    return ParseResult(labels, tree, tuple(outliers), forest)


def scene_seed(scene) -> int:
    key = scene.scene_id if scene.scene_id is not None else repr([o.translation for o in scene.objects])
    return zlib.crc32(key.encode())


def _polygon_centroid(floor) -> np.ndarray:
    p = np.asarray(floor, dtype=float)
    x, z = p[:, 0], p[:, 1]
    xn, zn = np.roll(x, -1), np.roll(z, -1)
    cross = x * zn - xn * z
    a = cross.sum() / 2.0
    if abs(a) < 1e-12:
        return p.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((z + zn) * cross).sum()]) / (6.0 * a)


def fixed_order(scene, class_frequency: Mapping[int, float] | None = None) -> list[int]:
    """Most frequent class first, then class id, then distance to the floor centroid."""
    if class_frequency is None:
        class_frequency = Counter(o.class_id for o in scene.objects)
    centroid = _polygon_centroid(scene.floor)

    def key(i):
        o = scene.objects[i]
        return (-class_frequency.get(o.class_id, 0), o.class_id,
                float(np.linalg.norm(o.center2d - centroid)), i)

    return sorted(range(len(scene.objects)), key=key)


def make_ordering(scene, strategy, rng_seed=0, *, parsed: ParseResult | None = None,
                  class_frequency: Mapping[int, float] | None = None, **parse_kwargs) -> OrderedSequence:
    """Order a scene's objects with one of the six strategies.

    ``parsed`` lets callers reuse a cached parse; ``class_frequency`` feeds
    the ``fixed`` strategy (defaults to counts within the scene itself).
    """
    strategy = Strategy.parse(strategy)
    n = len(scene.objects)
    if n == 0:
        raise ValueError("empty scene")
    if strategy is Strategy.RANDOM_SINGLE:
        seed = scene_seed(scene)
        return OrderedSequence(tuple(np.random.default_rng(seed).permutation(n)), strategy, seed)
    if strategy is Strategy.RANDOM_MULTIPLE:
        return OrderedSequence(tuple(_rng(rng_seed).permutation(n)), strategy, _seed_int(rng_seed))
    if strategy is Strategy.FIXED:
        return OrderedSequence(tuple(fixed_order(scene, class_frequency)), strategy, None)
    if parsed is None:
        parsed = parse_scene(scene, **parse_kwargs)
    rng = _rng(rng_seed)
    if strategy is Strategy.TREE_BFS:
        return linearize(parsed.single_tree(), "bfs", rng, strategy).with_seed(rng_seed)
    tree = sample_tree(parsed.forest, rng)
    traversal = "dfs" if strategy is Strategy.FOREST_DFS else "bfs"
    return linearize(tree, traversal, rng, strategy).with_seed(rng_seed)


def _seed_int(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


def class_frequencies(scenes: Iterable) -> Counter:
    counts: Counter = Counter()
    for s in scenes:
        counts.update(o.class_id for o in s.objects)
    return counts


def check_sequence(seq: OrderedSequence, tree: SceneTree | None = None, bfs: bool = False) -> list[str]:
    """Return a list of violated ordering invariants (empty when the sequence is valid)."""
    problems = []
    n = len(seq.order)
    if sorted(seq.order) != list(range(n)):
        problems.append("not a permutation")
    if tree is not None:
        pos = {v: i for i, v in enumerate(seq.order)}
        for v, p in tree.parent.items():
            if p != ROOT and pos.get(p, n) >= pos.get(v, -1):
                problems.append(f"parent {p} does not precede {v}")
        if bfs:
            depth = tree.depth()
            ds = [depth[v] for v in seq.order]
            if any(a > b for a, b in zip(ds, ds[1:])):
                problems.append("depth decreases along BFS sequence")
    return problems


def sequence_set(scene, strategy, n_samples: int = 10, rng_seed=0, *, mode: str = "sampled",
                 parsed: ParseResult | None = None, class_frequency=None,
                 **parse_kwargs) -> list[OrderedSequence]:
    """The set of sequences a strategy assigns to one scene.

    Single-order strategies (``random_single``, ``fixed``, ``tree_bfs``)
    yield one sequence.  In ``sampled`` mode the other strategies yield
    ``n_samples`` independent draws of :func:`make_ordering`, each with a
    fresh forest sample and sibling shuffle.  In ``members`` mode forest
    strategies instead yield one sequence per member tree, all sharing one
    sibling order, so the set varies only with where outliers attach.
    """
    strategy = Strategy.parse(strategy)
    if mode not in ("sampled", "members"):
        raise ValueError(f"unknown sequence-set mode {mode!r}")
    if strategy in (Strategy.RANDOM_SINGLE, Strategy.FIXED, Strategy.TREE_BFS):
        return [make_ordering(scene, strategy, rng_seed, parsed=parsed,
                              class_frequency=class_frequency, **parse_kwargs)]
    if parsed is None and strategy is not Strategy.RANDOM_MULTIPLE:
        parsed = parse_scene(scene, **parse_kwargs)
    if mode == "sampled" or strategy is Strategy.RANDOM_MULTIPLE:
        seeds = np.random.SeedSequence(_seed_int(rng_seed) or 0).spawn(n_samples)
        return [make_ordering(scene, strategy, np.random.default_rng(sq), parsed=parsed)
                for sq in seeds]
    keys = _rng(rng_seed).random(len(scene.objects))
    traversal = "dfs" if strategy is Strategy.FOREST_DFS else "bfs"
    return [linearize(t, traversal, None, strategy, keys) for t in parsed.forest.members()]
