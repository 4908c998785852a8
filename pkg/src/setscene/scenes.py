"""Scene data types, floor rasterization, overlap tests, and the toy-room generator."""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class SchemaError(ValueError):
    """Scene document failed validation; the message names the field path."""


def wrap_angle(r):
    """Wrap an angle to [-pi, pi]. Identity for values already in range."""
    return float(r - TWO_PI * np.round(r / TWO_PI))


@dataclass
class SceneObject:
    """One placed box: category id, half-extents, centroid, yaw about +y.

    The yaw convention: the box's local x axis points along
    (cos r, sin r) in the floor (x, z) plane.
    """
    category: int
    size: np.ndarray
    location: np.ndarray
    orientation: float
    category_name: str = None

    def __post_init__(self):
        self.category = int(self.category)
        self.size = np.asarray(self.size, dtype=float)
        self.location = np.asarray(self.location, dtype=float)
        self.orientation = float(self.orientation)

    def copy(self):
        return SceneObject(self.category, self.size.copy(), self.location.copy(),
                           self.orientation, self.category_name)


@dataclass
class FloorMask:
    """Binary occupancy grid of the floor. Row index follows z, column follows x."""
    grid: np.ndarray
    x0: float
    z0: float
    dx: float
    dz: float

    @property
    def resolution(self):
        return self.grid.shape[0]

    def cell_center(self, i, j):
        return (self.x0 + (j + 0.5) * self.dx, self.z0 + (i + 0.5) * self.dz)


@dataclass
class Scene:
    """A room: unordered object set plus floor geometry.

    bounds is (xmin, ymin, zmin, xmax, ymax, zmax) in meters. Object order in
    the list carries no meaning; everything downstream must be insensitive
    to it.
    """
    room_type: str
    bounds: np.ndarray
    floor_polygon: np.ndarray
    objects: list = field(default_factory=list)
    floor: FloorMask = None

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        self.floor_polygon = np.asarray(self.floor_polygon, dtype=float)

    def rasterized_floor(self, resolution=64):
        if self.floor is None or self.floor.resolution != resolution:
            b = self.bounds
            self.floor = rasterize_floor(self.floor_polygon, resolution,
                                         region=(b[0], b[2], b[3], b[5]))
        return self.floor

    def copy(self):
        return Scene(self.room_type, self.bounds.copy(), self.floor_polygon.copy(),
                     [o.copy() for o in self.objects], self.floor)


# ---------------------------------------------------------------------------
# geometry


def points_in_polygon(px, pz, polygon):
    """Even-odd rule for arrays of query points. Boundary behavior unspecified."""
    px = np.asarray(px, dtype=float)
    pz = np.asarray(pz, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, z1 = poly[k]
        x2, z2 = poly[(k + 1) % n]
        if z1 == z2:
            continue
        crosses = (z1 > pz) != (z2 > pz)
        xin = x1 + (pz - z1) * (x2 - x1) / (z2 - z1)
        inside ^= crosses & (px < xin)
    return inside


def point_in_polygon(x, z, polygon):
    return bool(points_in_polygon(np.asarray([x]), np.asarray([z]), polygon)[0])


def _cross(ox, oz, ax, az, bx, bz):
    return (ax - ox) * (bz - oz) - (az - oz) * (bx - ox)

def _on_segment(px, pz, qx, qz, rx, rz):
    return (min(px, qx) <= rx <= max(px, qx)) and (min(pz, qz) <= rz <= max(pz, qz))

def _segments_intersect(p1, p2, p3, p4):
    d1 = _cross(*p3, *p4, *p1)
    d2 = _cross(*p3, *p4, *p2)
    d3 = _cross(*p1, *p2, *p3)
    d4 = _cross(*p1, *p2, *p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 \
            and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(*p3, *p4, *p1):
        return True
    if d2 == 0 and _on_segment(*p3, *p4, *p2):
        return True
    if d3 == 0 and _on_segment(*p1, *p2, *p3):
        return True
    if d4 == 0 and _on_segment(*p1, *p2, *p4):
        return True
    return False


def polygon_is_simple(polygon):
    """True when no two non-adjacent edges touch and no edge is degenerate."""
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    edges = [(tuple(poly[k]), tuple(poly[(k + 1) % n])) for k in range(n)]
    for a, b in edges:
        if a == b:
            return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def polygon_area(polygon):
    poly = np.asarray(polygon, dtype=float)
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def rasterize_floor(polygon, resolution=64, region=None):
    """Binary mask over `region` (x0, z0, x1, z1); cell is 1 iff its center
    lies inside the polygon. Defaults to the polygon's tight bounding box.
    """
    poly = np.asarray(polygon, dtype=float)
    if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
        raise ValueError(f"polygon must be (V>=3, 2), got {poly.shape}")
    if not np.all(np.isfinite(poly)):
        raise ValueError("polygon has non-finite vertices")
    if not polygon_is_simple(poly):
        raise ValueError("self-intersecting polygon")
    if region is None:
        region = (poly[:, 0].min(), poly[:, 1].min(), poly[:, 0].max(), poly[:, 1].max())
    x0, z0, x1, z1 = (float(v) for v in region)
    r = int(resolution)
    dx = (x1 - x0) / r
    dz = (z1 - z0) / r
    xs = x0 + (np.arange(r) + 0.5) * dx
    zs = z0 + (np.arange(r) + 0.5) * dz
    gx, gz = np.meshgrid(xs, zs)
    inside = points_in_polygon(gx.ravel(), gz.ravel(), poly).reshape(r, r)
    return FloorMask(inside.astype(np.uint8), x0, z0, dx, dz)


def _footprint_axes(obj):
    c = math.cos(obj.orientation)
    s = math.sin(obj.orientation)
    return ((c, s), (-s, c))


def boxes_overlap(a, b):
    """Separating-axis intersection test for two yaw-oriented boxes.

    Touching counts as not overlapping. Vertical extents are axis-aligned
    intervals; the floor-plane test projects onto both boxes' local axes.
    """
    if abs(a.location[1] - b.location[1]) >= a.size[1] + b.size[1]:
        return False
    dx = b.location[0] - a.location[0]
    dz = b.location[2] - a.location[2]
    axes_a = _footprint_axes(a)
    axes_b = _footprint_axes(b)
    ext_a = (a.size[0], a.size[2])
    ext_b = (b.size[0], b.size[2])
    for ux, uz in axes_a + axes_b:
        ra = sum(e * abs(vx * ux + vz * uz) for e, (vx, vz) in zip(ext_a, axes_a))
        rb = sum(e * abs(vx * ux + vz * uz) for e, (vx, vz) in zip(ext_b, axes_b))
        if abs(dx * ux + dz * uz) >= ra + rb:
            return False
    return True


def world_footprint_extents(size, orientation):
    """Axis-aligned half-extents of the rotated footprint."""
    c = abs(math.cos(orientation))
    s = abs(math.sin(orientation))
    return (size[0] * c + size[2] * s, size[0] * s + size[2] * c)


# ---------------------------------------------------------------------------
# normalization between meters and the model's [-1, 1] coordinates


def bounds_center_half(bounds):
    b = np.asarray(bounds, dtype=float)
    return (b[:3] + b[3:]) / 2.0, (b[3:] - b[:3]) / 2.0


def normalize_object(obj, bounds):
    """Map to model coordinates: location and size per-axis by the bounds
    half-ranges, orientation by pi. Returns (size, location, orientation)."""
    center, half = bounds_center_half(bounds)
    return (obj.size / half, (obj.location - center) / half, obj.orientation / math.pi)


def denormalize_object(category, size_n, location_n, orientation_n, bounds,
                       clamp=True, category_name=None):
    """Inverse of normalize_object. With clamp, locations are pulled into the
    bounds box and sizes floored at a small positive fraction of the room."""
    center, half = bounds_center_half(bounds)
    size_n = np.asarray(size_n, dtype=float)
    location_n = np.asarray(location_n, dtype=float)
    if clamp:
        size_n = np.maximum(size_n, 0.01)
        location_n = np.clip(location_n, -1.0, 1.0)
    return SceneObject(category, size_n * half, center + location_n * half,
                       wrap_angle(float(orientation_n) * math.pi), category_name)


def square_bounds_for_polygon(polygon, y_range=(0.0, 3.0), margin=0.05):
    """Rotation-safe bounds: a square centered on the polygon's bounding box,
    wide enough to contain the polygon under any yaw about that center."""
    poly = np.asarray(polygon, dtype=float)
    cx = (poly[:, 0].min() + poly[:, 0].max()) / 2.0
    cz = (poly[:, 1].min() + poly[:, 1].max()) / 2.0
    hs = float(np.hypot(poly[:, 0] - cx, poly[:, 1] - cz).max()) + margin
    return np.array([cx - hs, y_range[0], cz - hs, cx + hs, y_range[1], cz + hs])


def rotate_scene(scene, theta):
    """Rigidly rotate floor and objects about the bounds center. Bounds keep;
    the cached floor mask is dropped and re-rasterized on demand."""
    center, _ = bounds_center_half(scene.bounds)
    ct, st = math.cos(theta), math.sin(theta)

    def rot(x, z):
        rx, rz = x - center[0], z - center[2]
        return (center[0] + ct * rx - st * rz, center[2] + st * rx + ct * rz)

    poly = np.array([rot(x, z) for x, z in scene.floor_polygon])
    objs = []
    for o in scene.objects:
        x, z = rot(o.location[0], o.location[2])
        objs.append(SceneObject(o.category, o.size.copy(),
                                (x, o.location[1], z),
                                wrap_angle(o.orientation + theta), o.category_name))
    return Scene(scene.room_type, scene.bounds.copy(), poly, objs, floor=None)


# ---------------------------------------------------------------------------
# toy-room generator


@dataclass(frozen=True)
class SatelliteRule:
    category: str
    count_range: tuple
    radius: float


@dataclass(frozen=True)
class ExtraRule:
    category: str
    probability: float


@dataclass(frozen=True)
class ToyRuleSpec:
    """Rule set for the synthetic ground-truth generator.

    One anchor object per scene, satellites placed near it, optional extras
    anywhere in the room interior (clear of the walls). All category names
    must come from `categories`; the tuple order defines the integer ids.
    """
    categories: tuple = ("table", "chair", "lamp")
    anchor: str = "table"
    satellites: tuple = (SatelliteRule("chair", (2, 4), 1.2),)
    extras: tuple = (ExtraRule("lamp", 0.5),)
    room_size_range: tuple = (3.2, 4.2)
    ceiling: float = 3.0
    seed: int = 0


# half-extent ranges (x/z footprint, y) per role
_ANCHOR_SIZE = ((0.35, 0.50), (0.36, 0.38))
_SATELLITE_SIZE = ((0.18, 0.25), (0.42, 0.48))
_EXTRA_SIZE = ((0.12, 0.18), (0.60, 0.80))

# minimum centroid distance from walls for free-standing extras; anchors and
# satellites get an equivalent clearance from the anchor placement margin
_EXTRA_WALL_CLEARANCE = 0.40


def _validate_rules(spec):
    names = set(spec.categories)
    for s in spec.satellites:
        if s.category not in names:
            raise ValueError(f"satellite rule references undeclared category {s.category!r}")
        lo, hi = s.count_range
        if not (0 <= lo <= hi):
            raise ValueError(f"bad count range {s.count_range}")
    for e in spec.extras:
        if e.category not in names:
            raise ValueError(f"extra rule references undeclared category {e.category!r}")
        if not (0.0 <= e.probability <= 1.0):
            raise ValueError(f"bad probability {e.probability}")
    if spec.anchor not in names:
        raise ValueError(f"anchor category {spec.anchor!r} not declared")


def _draw_size(rng, ranges):
    (flo, fhi), (ylo, yhi) = ranges
    sx = rng.uniform(flo, fhi)
    sz = rng.uniform(flo, fhi)
    return np.array([sx, rng.uniform(ylo, yhi), sz])


def _sample_toy_scene(spec, name_to_id, rng, budget=1000):
    w, d = rng.uniform(spec.room_size_range[0], spec.room_size_range[1], size=2)
    hs = math.hypot(w, d) / 2.0 + 0.05
    bounds = np.array([-hs, 0.0, -hs, hs, spec.ceiling, hs])
    polygon = np.array([[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]])
    objects = []
    attempts = [int(budget)]

    def try_place(make):
        while attempts[0] > 0:
            attempts[0] -= 1
            obj = make()
            if obj is None:
                continue
            if any(boxes_overlap(obj, o) for o in objects):
                continue
            objects.append(obj)
            return obj
        return None

    max_reach = max((0.875 * s.radius for s in spec.satellites), default=0.0)
    anchor_margin = max_reach + 0.30

    def make_anchor():
        size = _draw_size(rng, _ANCHOR_SIZE)
        r = rng.uniform(-math.pi, math.pi)
        ex, ez = world_footprint_extents(size, r)
        mx = w / 2 - max(anchor_margin, ex + 0.05)
        mz = d / 2 - max(anchor_margin, ez + 0.05)
        if mx <= 0 or mz <= 0:
            return None
        x = rng.uniform(-mx, mx)
        z = rng.uniform(-mz, mz)
        return SceneObject(name_to_id[spec.anchor], size, (x, size[1], z), r, spec.anchor)

    anchor = try_place(make_anchor)
    if anchor is None:
        return None

    for rule in spec.satellites:
        lo, hi = rule.count_range
        count = int(rng.integers(lo, hi + 1))

        def make_sat():
            dist = rng.uniform(0.70, 0.875 * rule.radius)
            phi = rng.uniform(-math.pi, math.pi)
            x = anchor.location[0] + dist * math.cos(phi)
            z = anchor.location[2] + dist * math.sin(phi)
            size = _draw_size(rng, _SATELLITE_SIZE)
            # face the anchor, with a little slack
            r = wrap_angle(math.atan2(anchor.location[2] - z, anchor.location[0] - x)
                           + rng.normal(0.0, 0.12))
            ex, ez = world_footprint_extents(size, r)
            if abs(x) > w / 2 - ex - 0.02 or abs(z) > d / 2 - ez - 0.02:
                return None
            return SceneObject(name_to_id[rule.category], size, (x, size[1], z), r,
                               rule.category)

        for _ in range(count):
            if try_place(make_sat) is None:
                return None

    for rule in spec.extras:
        if rng.random() >= rule.probability:
            continue

        def make_extra():
            size = _draw_size(rng, _EXTRA_SIZE)
            r = rng.uniform(-math.pi, math.pi)
            ex, ez = world_footprint_extents(size, r)
            # extras keep the same wall clearance the anchored furniture gets,
            # so every category's centroids stay strictly interior
            mx = w / 2 - max(ex + 0.02, _EXTRA_WALL_CLEARANCE)
            mz = d / 2 - max(ez + 0.02, _EXTRA_WALL_CLEARANCE)
            if mx <= 0 or mz <= 0:
                return None
            x = rng.uniform(-mx, mx)
            z = rng.uniform(-mz, mz)
            return SceneObject(name_to_id[rule.category], size, (x, size[1], z), r,
                               rule.category)

        if try_place(make_extra) is None:
            return None

    return Scene("toy", bounds, polygon, objects)


def generate_toy_dataset(spec, n):
    """Draw n rule-satisfying scenes. Deterministic for a given spec.seed.

    A scene whose rules cannot be satisfied within the placement budget is
    skipped (logged at the end), so the result can be shorter than n.
    """
    _validate_rules(spec)
    rng = np.random.default_rng(spec.seed)
    name_to_id = {c: i for i, c in enumerate(spec.categories)}
    scenes = []
    skipped = 0
    for _ in range(n):
        scene = _sample_toy_scene(spec, name_to_id, rng)
        if scene is None:
            skipped += 1
        else:
            scenes.append(scene)
    if skipped:
        log.warning("toy generator skipped %d of %d scenes (placement budget exhausted)",
                    skipped, n)
    return scenes


# ---------------------------------------------------------------------------
# dataset filtering


@dataclass(frozen=True)
class FilterRules:
    max_extent: float = None
    object_count_range: tuple = None
    overlap_forbidden: bool = False
    allowed_categories: frozenset = None


def _rejection_reason(scene, rules):
    if rules.object_count_range is not None:
        lo, hi = rules.object_count_range
        if not (lo <= len(scene.objects) <= hi):
            return "object_count"
    if rules.max_extent is not None:
        b = scene.bounds
        if max(b[3] - b[0], b[5] - b[2]) > rules.max_extent:
            return "max_extent"
    if rules.allowed_categories is not None:
        for o in scene.objects:
            if o.category not in rules.allowed_categories:
                return "category"
    if rules.overlap_forbidden:
        objs = scene.objects
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                if boxes_overlap(objs[i], objs[j]):
                    return "overlap"
    return None


def filter_scenes(scenes, rules):
    """Returns (survivors, report). Survivors keep their order; the report
    counts one rejection reason per dropped scene."""
    kept = []
    report = {"object_count": 0, "max_extent": 0, "category": 0, "overlap": 0}
    for scene in scenes:
        reason = _rejection_reason(scene, rules)
        if reason is None:
            kept.append(scene)
        else:
            report[reason] += 1
    return kept, report


# ---------------------------------------------------------------------------
# asset catalog


@dataclass(frozen=True)
class CatalogEntry:
    asset_id: str
    category: int
    extents: tuple


@dataclass
class Catalog:
    entries: list


def catalog_from_json(docs):
    entries = []
    for k, d in enumerate(docs):
        path = f"catalog[{k}]"
        ext = _number_list(d, "extents", 3, path)
        if any(e <= 0 for e in ext):
            raise SchemaError(f"{path}.extents: extents must be positive")
        entries.append(CatalogEntry(str(_require(d, "id", path)),
                                    _integer(d, "category", path), tuple(ext)))
    return Catalog(entries)


def retrieve_asset(catalog, category, size):
    """Nearest same-category entry by euclidean distance of box dimensions;
    ties go to the lowest catalog index.

    Catalog extents are full dimensions, so callers holding half-extents
    double them before querying.
    """
    candidates = [e for e in catalog.entries if e.category == category]
    if not candidates:
        raise ValueError(f"catalog has no entries for category {category}")
    q = np.asarray(size, dtype=float)
    return min(candidates,
               key=lambda e: float(np.sum((np.asarray(e.extents) - q) ** 2))).asset_id


# ---------------------------------------------------------------------------
# JSON io


def _require(doc, key, path):
    if key not in doc:
        p = f"{path}.{key}" if path else key
        raise SchemaError(f"{p}: missing required field")
    return doc[key]


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(value).__name__}")
    v = float(value)
    if not math.isfinite(v):
        raise SchemaError(f"{path}: expected a finite number")
    return v


def _integer(doc, key, path):
    v = _require(doc, key, path)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{path}.{key}: expected an integer, got {type(v).__name__}")
    return v


def _number_list(doc, key, length, path):
    v = _require(doc, key, path)
    p = f"{path}.{key}" if path else key
    if not isinstance(v, list) or len(v) != length:
        raise SchemaError(f"{p}: expected a list of {length} numbers")
    return [_number(x, f"{p}[{i}]") for i, x in enumerate(v)]


def polygon_from_json(doc, path="floor_polygon"):
    """Validate a [[x, z], ...] vertex list; errors name the bad entry."""
    if not isinstance(doc, list) or len(doc) < 3:
        raise SchemaError(f"{path}: expected a list of at least 3 [x, z] pairs")
    polygon = []
    for i, pt in enumerate(doc):
        if not isinstance(pt, list) or len(pt) != 2:
            raise SchemaError(f"{path}[{i}]: expected an [x, z] pair")
        polygon.append([_number(pt[0], f"{path}[{i}][0]"),
                        _number(pt[1], f"{path}[{i}][1]")])
    return polygon


def scene_from_json(doc):
    """Parse a scene document. Unknown fields are ignored; missing or
    ill-typed ones raise SchemaError naming the offending path."""
    if not isinstance(doc, dict):
        raise SchemaError("document: expected a JSON object")
    room_type = _require(doc, "room_type", "")
    if not isinstance(room_type, str):
        raise SchemaError("room_type: expected a string")
    bounds = _number_list(doc, "bounds", 6, "")
    if not (bounds[0] < bounds[3] and bounds[1] < bounds[4] and bounds[2] < bounds[5]):
        raise SchemaError("bounds: each min must lie below its max")

    polygon = polygon_from_json(_require(doc, "floor_polygon", ""))

    objects_doc = _require(doc, "objects", "")
    if not isinstance(objects_doc, list):
        raise SchemaError("objects: expected a list")
    objects = []
    for k, od in enumerate(objects_doc):
        path = f"objects[{k}]"
        if not isinstance(od, dict):
            raise SchemaError(f"{path}: expected an object")
        category = _integer(od, "category", path)
        if category < 0:
            raise SchemaError(f"{path}.category: must be non-negative")
        size = _number_list(od, "size", 3, path)
        if any(s <= 0 for s in size):
            raise SchemaError(f"{path}.size: extents must be positive")
        location = _number_list(od, "location", 3, path)
        orientation = _number(_require(od, "orientation", path), f"{path}.orientation")
        name = od.get("category_name")
        if name is not None and not isinstance(name, str):
            raise SchemaError(f"{path}.category_name: expected a string")
        objects.append(SceneObject(category, size, location, wrap_angle(orientation), name))

    floor = None
    if "floor_mask" in doc:
        fm = doc["floor_mask"]
        if not isinstance(fm, list) or not fm:
            raise SchemaError("floor_mask: expected a flat row-major 0/1 list")
        r = math.isqrt(len(fm))
        if r * r != len(fm):
            raise SchemaError("floor_mask: length must be a perfect square")
        for i, v in enumerate(fm):
            if v not in (0, 1) or isinstance(v, bool):
                raise SchemaError(f"floor_mask[{i}]: entries must be 0 or 1")
        grid = np.asarray(fm, dtype=np.uint8).reshape(r, r)
        floor = FloorMask(grid, bounds[0], bounds[2],
                          (bounds[3] - bounds[0]) / r, (bounds[5] - bounds[2]) / r)

    return Scene(room_type, bounds, polygon, objects, floor)


def object_to_json(o):
    od = {"category": int(o.category)}
    if o.category_name is not None:
        od["category_name"] = o.category_name
    od["size"] = [float(v) for v in o.size]
    od["location"] = [float(v) for v in o.location]
    od["orientation"] = float(o.orientation)
    return od


def scene_to_json(scene):
    doc = {
        "room_type": scene.room_type,
        "bounds": [float(v) for v in scene.bounds],
        "floor_polygon": [[float(x), float(z)] for x, z in scene.floor_polygon],
        "objects": [object_to_json(o) for o in scene.objects],
    }
    if scene.floor is not None:
        doc["floor_mask"] = [int(v) for v in scene.floor.grid.ravel()]
    return doc


def load_scene(path):
    with open(path) as f:
        return scene_from_json(json.load(f))


def save_scene(scene, path):
    with open(path, "w") as f:
        json.dump(scene_to_json(scene), f)


def load_scenes(path):
    """Read a dataset file: JSON list of scene documents."""
    with open(path) as f:
        docs = json.load(f)
    if not isinstance(docs, list):
        raise SchemaError("dataset: expected a JSON list of scenes")
    return [scene_from_json(d) for d in docs]


def save_scenes(scenes, path):
    with open(path, "w") as f:
        json.dump([scene_to_json(s) for s in scenes], f)
