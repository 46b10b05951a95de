"""World geometry: extruded-polygon obstacles, the road network and file I/O.

Coordinates are meters in a right-handed inertial frame with the ground
plane at z = 0.  Obstacles are prisms ``footprint x [0, height]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

Point2 = tuple[float, float]


class EnvironmentError_(ValueError):
    """Invalid environment contents (invariant violation)."""


class EnvironmentFormatError(ValueError):
    """Environment file could not be parsed or does not match the schema."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# Public alias; the trailing underscore only avoids shadowing the builtin.
EnvironmentValidationError = EnvironmentError_


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Obstacle:
    vertices: tuple[Point2, ...]
    height: float

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "height", float(self.height))
        if len(verts) < 3:
            raise EnvironmentValidationError(
                f"obstacle footprint needs at least 3 vertices, got {len(verts)}")
        if not self.height > 0:
            raise EnvironmentValidationError(f"obstacle height must be > 0, got {self.height}")
        if not self.polygon.is_valid:
            raise EnvironmentValidationError("obstacle footprint is not a simple polygon")
        if signed_area(verts) <= 0:
            raise EnvironmentValidationError("obstacle vertices must be ordered counter-clockwise")

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @classmethod
    def box(cls, x0: float, y0: float, x1: float, y1: float, height: float) -> "Obstacle":
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), height)


@dataclass(frozen=True)
class RoadNetwork:
    nodes: tuple[Point2, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        nodes = tuple((float(x), float(y)) for x, y in self.nodes)
        edges = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if not (0 <= i < len(nodes) and 0 <= j < len(nodes)) or i == j:
                raise EnvironmentValidationError(f"road edge ({i}, {j}) references invalid nodes")
            edges.append((i, j))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(edges))

    def degree(self) -> np.ndarray:
        deg = np.zeros(len(self.nodes), dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in self.nodes]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def is_connected(self) -> bool:
        if not self.nodes:
            return False
        parent = list(range(len(self.nodes)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges:
            parent[find(i)] = find(j)
        return len({find(i) for i in range(len(self.nodes))}) == 1


@dataclass(frozen=True)
class Environment:
    obstacles: tuple[Obstacle, ...]
    bounds: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    road: RoadNetwork
    h_feasible: float
    tile_side: float | None = None
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "h_feasible", float(self.h_feasible))
        if self.tile_side is not None:
            object.__setattr__(self, "tile_side", float(self.tile_side))
        if self.validate:
            validate_environment(self)

    @property
    def h_building(self) -> float:
        return max((o.height for o in self.obstacles), default=0.0)

    def to_dict(self) -> dict:
        return {
            "bounds": list(self.bounds),
            "h_feasible": self.h_feasible,
            "tile_side": self.tile_side,
            "obstacles": [{"vertices": [list(v) for v in o.vertices], "height": o.height}
                          for o in self.obstacles],
            "road": {"nodes": [list(n) for n in self.road.nodes],
                     "edges": [list(e) for e in self.road.edges]},
        }

    def digest(self) -> str:
        """Stable content hash used to key precomputation caches."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def validate_environment(env: Environment) -> None:
    x0, x1, y0, y1 = env.bounds
    if not (x0 < x1 and y0 < y1):
        raise EnvironmentValidationError(f"degenerate bounds {env.bounds}")
    box = shapely.box(x0, y0, x1, y1)
    polys = [o.polygon for o in env.obstacles]
    for i, p in enumerate(polys):
        if not box.covers(p):
            raise EnvironmentValidationError(f"obstacle {i} lies outside the bounds")
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            if polys[i].relate_pattern(polys[j], "T********"):
                raise EnvironmentValidationError(f"obstacles {i} and {j} overlap")
    if env.obstacles and not env.h_feasible > env.h_building:
        raise EnvironmentValidationError(
            f"h_feasible ({env.h_feasible}) must exceed the tallest building ({env.h_building})")
    road = env.road
    for k, (i, j) in enumerate(road.edges):
        seg = LineString([road.nodes[i], road.nodes[j]])
        for o, p in enumerate(polys):
            if seg.relate_pattern(p, "T********"):
                raise EnvironmentValidationError(f"road edge {k} crosses obstacle {o}")
    if road.nodes and not road.is_connected():
        raise EnvironmentValidationError("road network is not connected")


# ---------------------------------------------------------------------------
# segment / prism intersection
# ---------------------------------------------------------------------------

def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _points_in_polygon(px, py, poly: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Closed point-in-polygon test (boundary counts as inside)."""
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        xi, yi = poly[k]
        xj, yj = poly[(k + 1) % n]
        crosses = (yi > py) != (yj > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= crosses & (px < xint)
        elen = math.hypot(xj - xi, yj - yi)
        cross = np.abs(_orient(xi, yi, xj, yj, px, py))
        within = ((px >= min(xi, xj) - tol) & (px <= max(xi, xj) + tol)
                  & (py >= min(yi, yj) - tol) & (py <= max(yi, yj) + tol))
        on_edge |= within & (cross <= tol * max(elen, 1.0))
    return inside | on_edge


def _segments_cross_edge(ax, ay, bx, by, cx, cy, dx, dy) -> np.ndarray:
    """Closed segment-segment intersection of many AB against one edge CD."""
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    proper = (o1 * o2 <= 0) & (o3 * o4 <= 0)
    collinear = (o1 == 0) & (o2 == 0)
    overlap = ((np.maximum(np.minimum(ax, bx), min(cx, dx)) <= np.minimum(np.maximum(ax, bx), max(cx, dx)))
               & (np.maximum(np.minimum(ay, by), min(cy, dy)) <= np.minimum(np.maximum(ay, by), max(cy, dy))))
    degenerate = (ax == bx) & (ay == by)
    return np.where(collinear, overlap, proper) & ~degenerate


def segments_hit_prism(p0: np.ndarray, p1: np.ndarray, poly: np.ndarray, height: float) -> np.ndarray:
    """Vectorized closed-segment vs. prism test.

    ``p0`` and ``p1`` are ``(N, 3)`` arrays of endpoints.  Touching a face
    counts as a hit.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    p0, p1 = np.broadcast_arrays(p0, p1)
    z0, dz = p0[:, 2], p1[:, 2] - p0[:, 2]
    flat = dz == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(flat, 0.0, (0.0 - z0) / dz)
        tb = np.where(flat, 1.0, (height - z0) / dz)
    t_lo = np.maximum(0.0, np.minimum(ta, tb))
    t_hi = np.minimum(1.0, np.maximum(ta, tb))
    valid = np.where(flat, (z0 >= 0) & (z0 <= height), t_lo <= t_hi)
    hit = np.zeros(len(p0), dtype=bool)
    if not valid.any():
        return hit
    idx = np.nonzero(valid)[0]
    d = p1[idx, :2] - p0[idx, :2]
    a = p0[idx, :2] + t_lo[idx, None] * d
    b = p0[idx, :2] + t_hi[idx, None] * d
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    # cheap reject against the footprint bounding box
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    near = ~((np.maximum(ax, bx) < lo[0]) | (np.minimum(ax, bx) > hi[0])
             | (np.maximum(ay, by) < lo[1]) | (np.minimum(ay, by) > hi[1]))
    if not near.any():
        return hit
    idx, ax, ay, bx, by = idx[near], ax[near], ay[near], bx[near], by[near]
    res = _points_in_polygon(ax, ay, poly) | _points_in_polygon(bx, by, poly)
    n = len(poly)
    for k in range(n):
        cx, cy = poly[k]
        dx_, dy_ = poly[(k + 1) % n]
        res |= _segments_cross_edge(ax, ay, bx, by, cx, cy, dx_, dy_)
    hit[idx] = res
    return hit


def segments_blocked(p0, p1, env: Environment) -> np.ndarray:
    """True where the segment touches any obstacle prism."""
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    p1 = np.atleast_2d(np.asarray(p1, dtype=float))
    p0, p1 = np.broadcast_arrays(p0, p1)
    out = np.zeros(len(p0), dtype=bool)
    for o in env.obstacles:
        todo = ~out
        if not todo.any():
            break
        out[todo] = segments_hit_prism(p0[todo], p1[todo], o.array, o.height)
    return out


def segment_intersects_obstacle(p0, p1, env: Environment) -> bool:
    """Whether the segment p0-p1 touches any obstacle (grazing counts)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
        raise ValueError("segment endpoints must be finite")
    return bool(segments_blocked(p0[None], p1[None], env)[0])


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def save_environment(env: Environment, path) -> None:
    Path(path).write_text(json.dumps(env.to_dict(), indent=1) + "\n")


def _require(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise EnvironmentFormatError(f"{where}: missing key '{key}'")
    val = obj[key]
    if not isinstance(val, kind):
        raise EnvironmentFormatError(f"{where}.{key}: expected {kind}, got {type(val).__name__}")
    return val


def environment_from_dict(data: dict) -> Environment:
    bounds = _require(data, "bounds", list, "root")
    if len(bounds) != 4:
        raise EnvironmentFormatError("root.bounds: expected [x_min, x_max, y_min, y_max]")
    obstacles = []
    for i, o in enumerate(_require(data, "obstacles", list, "root")):
        verts = _require(o, "vertices", list, f"obstacles[{i}]")
        if len(verts) < 3 or any(not isinstance(v, list) or len(v) != 2 for v in verts):
            raise EnvironmentFormatError(
                f"obstacles[{i}].vertices: need >= 3 [x, y] pairs, got {len(verts)}")
        height = _require(o, "height", (int, float), f"obstacles[{i}]")
        try:
            obstacles.append(Obstacle(tuple(tuple(v) for v in verts), height))
        except EnvironmentValidationError as exc:
            raise EnvironmentFormatError(f"obstacles[{i}]: {exc}") from None
    road = _require(data, "road", dict, "root")
    nodes = _require(road, "nodes", list, "road")
    edges = _require(road, "edges", list, "road")
    return Environment(
        obstacles=tuple(obstacles),
        bounds=tuple(bounds),
        road=RoadNetwork(tuple(tuple(n) for n in nodes), tuple(tuple(e) for e in edges)),
        h_feasible=data.get("h_feasible", 120.0),
        tile_side=data.get("tile_side"),
    )


def _line_of(text: str, needle: str) -> int | None:
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def load_environment(path) -> Environment:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EnvironmentFormatError(exc.msg, line=exc.lineno) from None
    try:
        return environment_from_dict(data)
    except EnvironmentFormatError as exc:
        if exc.line is None:
            # point at the offending obstacle entry when we can find it
            msg = str(exc)
            line = None
            if msg.startswith("obstacles["):
                idx = int(msg[len("obstacles["):msg.index("]")])
                line = _nth_line(text, '"vertices"', idx)
            raise EnvironmentFormatError(msg, line=line) from None
        raise


def _nth_line(text: str, needle: str, n: int) -> int | None:
    pos = -1
    for _ in range(n + 1):
        pos = text.find(needle, pos + 1)
        if pos < 0:
            return None
    return text.count("\n", 0, pos) + 1
