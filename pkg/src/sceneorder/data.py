"""Scene documents, floor rasterization, dataset splits and the room grammar."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import SceneObject, project_topdown, wrap_angle, yaw_matrix


class SchemaError(ValueError):
    """A scene document failed validation; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True, eq=False)
class Scene:
    objects: tuple[SceneObject, ...]
    floor: tuple[tuple[float, float], ...]
    classes: tuple[str, ...]
    room_type: str = "room"
    scene_id: str | None = None
    ground_truth_tree: Mapping[int, int] | None = None
    outliers: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "floor", tuple((float(x), float(z)) for x, z in self.floor))
        object.__setattr__(self, "classes", tuple(self.classes))
        for i, obj in enumerate(self.objects):
            if obj.class_id >= len(self.classes):
                raise ValueError(f"objects[{i}] class_id {obj.class_id} outside vocabulary")

    def __len__(self):
        return len(self.objects)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return to_document(self) == to_document(other)

    @property
    def class_names(self) -> list[str]:
        return [self.classes[o.class_id] for o in self.objects]

    def replace(self, **changes) -> "Scene":
        fields = dict(objects=self.objects, floor=self.floor, classes=self.classes,
                      room_type=self.room_type, scene_id=self.scene_id,
                      ground_truth_tree=self.ground_truth_tree, outliers=self.outliers)
        fields.update(changes)
        return Scene(**fields)

    def with_vocabulary(self, classes: Sequence[str]) -> "Scene":
        """Re-index class ids against another vocabulary."""
        index = {name: i for i, name in enumerate(classes)}
        objs = []
        for name, obj in zip(self.class_names, self.objects):
            if name not in index:
                raise KeyError(f"class {name!r} not in vocabulary")
            objs.append(obj.replace(class_id=index[name]))
        return self.replace(objects=objs, classes=tuple(classes))


# ---------------------------------------------------------------- JSON I/O

def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(path, "expected a finite number")
    return value


def _vector(value, length, path):
    if not isinstance(value, list) or len(value) != length:
        raise SchemaError(path, f"expected a list of {length} numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def polygon_area(floor) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    p = np.asarray(floor, dtype=float)
    x, z = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(z, -1)) - np.dot(np.roll(x, -1), z))


def validate_polygon(floor, path="floor"):
    if not isinstance(floor, (list, tuple)) or len(floor) < 3:
        raise SchemaError(path, "polygon needs at least 3 vertices")
    pts = [tuple(_vector(list(v), 2, f"{path}[{i}]")) for i, v in enumerate(floor)]
    if abs(polygon_area(pts)) <= 1e-12:
        raise SchemaError(path, "degenerate polygon with zero area")
    n = len(pts)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                raise SchemaError(path, f"polygon edges {i} and {j} intersect")
    return pts


def from_document(doc: Mapping, classes: Sequence[str] | None = None) -> Scene:
    """Build a :class:`Scene` from its JSON form.

    Without ``classes`` the vocabulary is the sorted set of class names
    present in the document.
    """
    if not isinstance(doc, Mapping):
        raise SchemaError("$", "scene document must be an object")
    for key in ("room_type", "floor", "objects"):
        if key not in doc:
            raise SchemaError(key, "missing required field")
    if not isinstance(doc["room_type"], str):
        raise SchemaError("room_type", "expected a string")
    scene_id = doc.get("scene_id")
    if scene_id is not None and not isinstance(scene_id, str):
        raise SchemaError("scene_id", "expected a string")
    floor = validate_polygon(doc["floor"])
    raw_objects = doc["objects"]
    if not isinstance(raw_objects, list):
        raise SchemaError("objects", "expected a list")
    names = []
    for i, o in enumerate(raw_objects):
        p = f"objects[{i}]"
        if not isinstance(o, Mapping):
            raise SchemaError(p, "expected an object")
        for key in ("class", "t", "b", "r"):
            if key not in o:
                raise SchemaError(f"{p}.{key}", "missing required field")
        if not isinstance(o["class"], str):
            raise SchemaError(f"{p}.class", "expected a string")
        names.append(o["class"])
    if classes is None:
        classes = sorted(set(names))
    index = {name: i for i, name in enumerate(classes)}
    objects = []
    for i, (o, name) in enumerate(zip(raw_objects, names)):
        p = f"objects[{i}]"
        if name not in index:
            raise SchemaError(f"{p}.class", f"class {name!r} not in vocabulary")
        t = _vector(o["t"], 3, f"{p}.t")
        b = _vector(o["b"], 3, f"{p}.b")
        if min(b) <= 0:
            raise SchemaError(f"{p}.b", "sizes must be strictly positive")
        r = _number(o["r"], f"{p}.r")
        objects.append(SceneObject(index[name], tuple(t), tuple(b), r))
    tree = None
    if doc.get("ground_truth_tree") is not None:
        raw = doc["ground_truth_tree"]
        if not isinstance(raw, Mapping):
            raise SchemaError("ground_truth_tree", "expected an object")
        tree = {}
        for k, v in raw.items():
            p = f"ground_truth_tree.{k}"
            try:
                node = int(k)
            except ValueError:
                raise SchemaError(p, "keys must be object indices") from None
            if isinstance(v, bool) or not isinstance(v, int) or v < -1 or v >= len(objects):
                raise SchemaError(p, "parent must be -1 or an object index")
            if not 0 <= node < len(objects):
                raise SchemaError(p, "node index out of range")
            tree[node] = v
    outliers = None
    if doc.get("outliers") is not None:
        if not isinstance(doc["outliers"], list):
            raise SchemaError("outliers", "expected a list of object indices")
        outliers = tuple(int(v) for v in doc["outliers"])
    return Scene(tuple(objects), tuple(floor), tuple(classes), doc["room_type"],
                 scene_id, tree, outliers)


def to_document(scene: Scene) -> dict:
    doc: dict = {}
    if scene.scene_id is not None:
        doc["scene_id"] = scene.scene_id
    doc["room_type"] = scene.room_type
    doc["floor"] = [[x, z] for x, z in scene.floor]
    doc["objects"] = [
        {"class": scene.classes[o.class_id], "t": list(o.translation), "b": list(o.size), "r": o.rotation}
        for o in scene.objects
    ]
    if scene.ground_truth_tree is not None:
        doc["ground_truth_tree"] = {str(k): int(v) for k, v in sorted(scene.ground_truth_tree.items())}
    if scene.outliers is not None:
        doc["outliers"] = list(scene.outliers)
    return doc


def load_scene(path, classes: Sequence[str] | None = None) -> Scene:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"invalid JSON: {exc}") from None
    return from_document(doc, classes)


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(json.dumps(to_document(scene), indent=2) + "\n")


def load_scenes(path, classes: Sequence[str] | None = None) -> list[Scene]:
    """Load a corpus from NDJSON, a JSON list, a single scene, or a directory of scene files.

    All scenes share one vocabulary (sorted union of names unless given).
    """
    path = Path(path)
    if path.is_dir():
        docs = [json.loads(p.read_text()) for p in sorted(path.glob("*.json"))]
    elif path.suffix == ".ndjson":
        docs = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    else:
        raw = json.loads(path.read_text())
        docs = raw if isinstance(raw, list) else [raw]
    if classes is None:
        names = set()
        for d in docs:
            names.update(o.get("class") for o in d.get("objects", []) if isinstance(o, Mapping))
        classes = sorted(n for n in names if isinstance(n, str))
    scenes = []
    for i, d in enumerate(docs):
        try:
            scenes.append(from_document(d, classes))
        except SchemaError as exc:
            raise SchemaError(f"[{i}].{exc.path}", str(exc).split(": ", 1)[1]) from None
    return scenes


def save_scenes(path, scenes: Iterable[Scene]) -> None:
    path = Path(path)
    if path.suffix == ".ndjson":
        lines = [json.dumps(to_document(s), separators=(",", ":")) for s in scenes]
        path.write_text("\n".join(lines) + "\n")
    else:
        path.write_text(json.dumps([to_document(s) for s in scenes], indent=1) + "\n")


def load_vocabulary(path) -> tuple[str, ...]:
    names = json.loads(Path(path).read_text())
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise SchemaError("$", "vocabulary must be a JSON list of class names")
    return tuple(names)


def save_vocabulary(path, classes: Sequence[str]) -> None:
    Path(path).write_text(json.dumps(list(classes)) + "\n")


# ---------------------------------------------------------- rasterization

def points_in_polygon(points: np.ndarray, polygon) -> np.ndarray:
    """Even-odd crossing test for an (M, 2) array of points."""
    poly = np.asarray(polygon, dtype=float)
    x, z = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    x0, z0 = poly[:, 0], poly[:, 1]
    x1, z1 = np.roll(x0, -1), np.roll(z0, -1)
    for ax, az, bx, bz in zip(x0, z0, x1, z1):
        crosses = (az > z) != (bz > z)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = ax + (z - az) * (bx - ax) / (bz - az)
        inside ^= crosses & (x < xi)
    return inside


@dataclass(frozen=True)
class RasterFrame:
    """Square raster window ``[-half_extent, half_extent]^2`` centred on the world origin."""
    half_extent: float
    resolution: int = 64

    @property
    def cell_size(self) -> float:
        return 2.0 * self.half_extent / self.resolution

    def cell_centers(self) -> np.ndarray:
        c = -self.half_extent + (np.arange(self.resolution) + 0.5) * self.cell_size
        xx, zz = np.meshgrid(c, c)
        return np.stack([xx.ravel(), zz.ravel()], axis=1)

    @classmethod
    def from_scenes(cls, scenes: Iterable[Scene], resolution: int = 64, margin: float = 1.02):
        # radius, not box extent, so any rotation of a floor stays inside the frame
        radius = max(float(np.linalg.norm(np.asarray(s.floor), axis=1).max()) for s in scenes)
        return cls(radius * margin, resolution)


def rasterize_floor(polygon, frame: RasterFrame | None = None, resolution: int = 64) -> np.ndarray:
    """Binary mask: cell is 1 iff its center lies inside the polygon.

    Row index runs along z, column index along x.  Without an explicit frame
    the window is fitted to this polygon alone.
    """
    poly = np.asarray(polygon, dtype=float)
    if poly.ndim != 2 or poly.shape[0] < 3 or abs(polygon_area(poly)) <= 1e-12:
        raise ValueError("degenerate polygon")
    if frame is None:
        frame = RasterFrame(float(np.abs(poly).max()), resolution)
    inside = points_in_polygon(frame.cell_centers(), poly)
    return inside.reshape(frame.resolution, frame.resolution).astype(np.uint8)


def rotate_scene(scene: Scene, angle: float) -> Scene:
    """Rotate floor and objects about the world origin by ``angle`` (yaw)."""
    rot = yaw_matrix(angle)
    floor = np.asarray(scene.floor) @ rot.T
    objs = []
    for o in scene.objects:
        x, z = rot @ o.center2d
        objs.append(o.replace(translation=(x, o.translation[1], z), rotation=wrap_angle(o.rotation + angle)))
    return scene.replace(objects=tuple(objs), floor=tuple(map(tuple, floor)))


# ----------------------------------------------------------------- splits

def split_dataset(scenes: Sequence, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> dict[str, list]:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(scenes)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    parts = {"train": perm[:n_train], "val": perm[n_train:n_train + n_val], "test": perm[n_train + n_val:]}
    for name, idx in parts.items():
        if len(idx) == 0:
            raise ValueError(f"split {name!r} is empty ({n} scenes, ratios {ratios})")
    return {name: [scenes[i] for i in idx] for name, idx in parts.items()}


# ---------------------------------------------------------------- grammar

CLASS_SIZES: dict[str, tuple[float, float, float]] = {
    "sofa": (2.0, 0.85, 0.9),
    "coffee_table": (1.0, 0.45, 0.55),
    "armchair": (0.8, 0.8, 0.8),
    "side_table": (0.45, 0.55, 0.45),
    "dining_table": (1.6, 0.75, 0.9),
    "dining_chair": (0.45, 0.9, 0.5),
    "double_bed": (1.6, 0.5, 2.0),
    "nightstand": (0.45, 0.5, 0.4),
    "desk": (1.4, 0.75, 0.7),
    "office_chair": (0.6, 1.0, 0.6),
    "cabinet": (1.0, 1.9, 0.45),
    "plant": (0.4, 1.0, 0.4),
    "floor_lamp": (0.35, 1.6, 0.35),
}


@dataclass(frozen=True)
class ZoneTemplate:
    anchor: str
    satellites: Mapping[str, float]
    count_range: tuple[int, int]
    radius: float


DEFAULT_ZONES = (
    ZoneTemplate("sofa", {"coffee_table": 0.5, "armchair": 0.3, "side_table": 0.2}, (1, 3), 1.0),
    ZoneTemplate("dining_table", {"dining_chair": 1.0}, (2, 4), 0.8),
    ZoneTemplate("double_bed", {"nightstand": 1.0}, (1, 2), 1.05),
    ZoneTemplate("desk", {"office_chair": 1.0}, (1, 1), 0.7),
)


@dataclass(frozen=True)
class GrammarSpec:
    """Procedural room grammar.

    Room width and depth are drawn from ``room_size`` on a grid of
    ``room_size_step`` metres (0 for a continuous draw).
    ``link_distance`` and ``separation`` are in units of the floor diagonal:
    every satellite lies within ``link_distance`` of its anchor, and objects of
    different groups (zones or outliers) are at least ``separation`` apart.
    """
    zones: tuple[ZoneTemplate, ...] = DEFAULT_ZONES
    zone_count: tuple[int, int] = (1, 3)
    repeat_zones: bool = True
    outlier_classes: tuple[str, ...] = ("cabinet", "plant", "floor_lamp")
    outlier_rate: float = 0.4
    max_outliers: int = 2
    room_size: tuple[float, float] = (7.0, 9.0)
    room_size_step: float = 1.0
    jitter: float = 0.08
    link_distance: float = 0.11
    separation: float = 0.13
    wall_margin: float = 0.15
    room_type: str = "livingroom"
    seed: int = 0

    def __post_init__(self):
        for z in self.zones:
            total = sum(z.satellites.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"satellite probabilities for {z.anchor} sum to {total}")
            if z.radius <= 0:
                raise ValueError("zone radius must be positive")
            anchor_vol = np.prod(CLASS_SIZES[z.anchor])
            if any(np.prod(CLASS_SIZES[s]) >= anchor_vol for s in z.satellites):
                raise ValueError(f"satellites of {z.anchor} must be smaller than the anchor")
        if not 0 <= self.outlier_rate <= 1:
            raise ValueError("outlier_rate must lie in [0, 1]")

    @property
    def classes(self) -> tuple[str, ...]:
        names = []
        for z in self.zones:
            names.append(z.anchor)
            names.extend(z.satellites)
        names.extend(self.outlier_classes)
        return tuple(dict.fromkeys(names))


class PlacementError(RuntimeError):
    pass


class _Placer:
    def __init__(self, rng, half_w, half_d, spec: GrammarSpec):
        self.rng = rng
        self.half = np.array([half_w, half_d])
        self.diag = 2.0 * float(np.linalg.norm(self.half))
        self.spec = spec
        self.objects: list[SceneObject] = []
        self.groups: list[int] = []

    def _make(self, name, center, rotation, class_index):
        sx, sy, sz = CLASS_SIZES[name]
        scale = 1.0 + self.rng.uniform(-0.05, 0.05, size=3)
        size = (sx * scale[0], sy * scale[1], sz * scale[2])
        return SceneObject(class_index[name], (float(center[0]), size[1] / 2.0, float(center[1])), size, rotation)

    def _fits(self, obj: SceneObject, group: int) -> bool:
        box = project_topdown(obj)
        m = self.spec.wall_margin
        if box.min[0] < -self.half[0] + m or box.max[0] > self.half[0] - m:
            return False
        if box.min[1] < -self.half[1] + m or box.max[1] > self.half[1] - m:
            return False
        for other, g in zip(self.objects, self.groups):
            ob = project_topdown(other)
            gap = 0.05
            if (box.min[0] < ob.max[0] + gap and ob.min[0] < box.max[0] + gap
                    and box.min[1] < ob.max[1] + gap and ob.min[1] < box.max[1] + gap):
                return False
            if g != group:
                if np.linalg.norm(obj.center2d - other.center2d) / self.diag < self.spec.separation:
                    return False
        return True

    def place(self, name, group, class_index, sampler, retries=100):
        for _ in range(retries):
            center, rotation = sampler()
            obj = self._make(name, center, rotation, class_index)
            if self._fits(obj, group):
                self.objects.append(obj)
                self.groups.append(group)
                return len(self.objects) - 1
        raise PlacementError(name)


_RIGHT_ANGLES = (0.0, math.pi / 2, -math.pi, -math.pi / 2)


def _generate_one(spec: GrammarSpec, rng: np.random.Generator, index: int, classes):
    class_index = {name: i for i, name in enumerate(classes)}
    lo, hi = spec.room_size
    if spec.room_size_step > 0:
        steps = int(math.floor((hi - lo) / spec.room_size_step + 1e-9)) + 1
        width, depth = lo + spec.room_size_step * rng.integers(0, steps, size=2)
    else:
        width, depth = rng.uniform(lo, hi, size=2)
    hw, hd = width / 2.0, depth / 2.0
    placer = _Placer(rng, hw, hd, spec)
    parent: dict[int, int] = {}
    n_zones = int(rng.integers(spec.zone_count[0], spec.zone_count[1] + 1))
    if not spec.repeat_zones:
        n_zones = min(n_zones, len(spec.zones))
    zone_ids = rng.choice(len(spec.zones), size=n_zones, replace=spec.repeat_zones)
    for group, zi in enumerate(zone_ids):
        zone = spec.zones[int(zi)]

        def anchor_sampler():
            return rng.uniform([-hw, -hd], [hw, hd]), _RIGHT_ANGLES[int(rng.integers(4))]

        a = placer.place(zone.anchor, group, class_index, anchor_sampler)
        parent[a] = -1
        anchor = placer.objects[a]
        names = list(zone.satellites)
        probs = np.array([zone.satellites[n] for n in names])
        count = int(rng.integers(zone.count_range[0], zone.count_range[1] + 1))
        for _ in range(count):
            name = names[int(rng.choice(len(names), p=probs))]

            def satellite_sampler():
                theta = rng.uniform(-math.pi, math.pi)
                r = zone.radius + rng.uniform(-spec.jitter, spec.jitter)
                r = min(r, spec.link_distance * placer.diag)
                offset = r * np.array([math.cos(theta), math.sin(theta)])
                # face the anchor, snapped to a right angle
                facing = math.atan2(-offset[1], -offset[0])
                k = int(round(facing / (math.pi / 2)))
                return anchor.center2d + offset, wrap_angle(k * math.pi / 2)

            s = placer.place(name, group, class_index, satellite_sampler)
            parent[s] = a
    n_out = int(rng.binomial(spec.max_outliers, spec.outlier_rate)) if spec.outlier_classes else 0
    outliers = []
    for k in range(n_out):
        name = spec.outlier_classes[int(rng.integers(len(spec.outlier_classes)))]

        def outlier_sampler():
            return rng.uniform([-hw, -hd], [hw, hd]), _RIGHT_ANGLES[int(rng.integers(4))]

        o = placer.place(name, len(zone_ids) + k, class_index, outlier_sampler)
        parent[o] = -1
        outliers.append(o)

    # scenes are unordered sets; hide construction order
    perm = rng.permutation(len(placer.objects))
    new_index = {int(old): new for new, old in enumerate(perm)}
    objects = tuple(placer.objects[int(old)] for old in perm)
    tree = {new_index[k]: (-1 if v == -1 else new_index[v]) for k, v in parent.items()}
    tree = dict(sorted(tree.items()))
    floor = ((-hw, -hd), (hw, -hd), (hw, hd), (-hw, hd))
    return Scene(objects, floor, classes, spec.room_type, f"grammar-{spec.seed}-{index:05d}",
                 tree, tuple(sorted(new_index[o] for o in outliers)))


def generate_grammar_dataset(spec: GrammarSpec, count: int) -> list[Scene]:
    """Sample ``count`` scenes with known ground-truth trees.

    Each scene draws its own generator from ``(spec.seed, index)``; failed
    placements resample the scene with the next attempt counter.
    """
    classes = spec.classes
    scenes = []
    for i in range(count):
        attempt = 0
        while True:
            rng = np.random.default_rng([spec.seed, i, attempt])
            try:
                scenes.append(_generate_one(spec, rng, i, classes))
                break
            except PlacementError:
                attempt += 1
                if attempt > 1000:
                    raise RuntimeError("grammar placement keeps failing; spec is over-constrained")
    return scenes


def zone_of_class(spec: GrammarSpec) -> dict[str, str]:
    """Map each satellite class to the anchor classes it can accompany (first match)."""
    out: dict[str, str] = {}
    for z in spec.zones:
        for s in z.satellites:
            out.setdefault(s, z.anchor)
    return out


def class_histogram(scenes: Iterable[Scene], n_classes: int) -> np.ndarray:
    counts = np.zeros(n_classes)
    for s in scenes:
        for o in s.objects:
            counts[o.class_id] += 1
    return counts
