"""Road-bound target: the position/velocity state graph and its Markov model.

Every sampled road point carries a set of *poses* (where the target is and
which way it is heading).  Points strictly inside a road edge have two
poses, one per direction.  Road-network nodes ("intersection points") have
an arriving and a departing pose per incident edge.  A state is a pose
paired with one of the discrete speeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .geometry import RoadNetwork

MOVE, ARRIVE, DEPART = 0, 1, 2

# epsilon index groups per intersection type: (u-turn, options...)
FOUR_WAY = (0, 1, 2, 3)        # u-turn, left, straight, right
FORK = (4, 5, 6)               # u-turn, left, right
THREE_WAY = (7, 8, 9)          # u-turn, straight, turn
GROUPS = {"four_way": FOUR_WAY, "fork": FORK, "three_way": THREE_WAY}


class ModelError(ValueError):
    """Invalid target-model inputs (speed set, tables)."""


# ---------------------------------------------------------------------------
# configuration tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManeuverTable:
    speeds: tuple[float, ...]
    eps: np.ndarray  # (10, len(speeds))

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        if eps.shape != (10, len(self.speeds)):
            raise ModelError(f"maneuver table needs shape (10, {len(self.speeds)}), got {eps.shape}")
        if np.any(eps < 0) or np.any(eps > 1):
            raise ModelError("maneuver probabilities must lie in [0, 1]")
        for name, grp in GROUPS.items():
            sums = eps[list(grp)].sum(axis=0)
            bad = np.nonzero(np.abs(sums - 1.0) > 1e-9)[0]
            if len(bad):
                v = self.speeds[bad[0]]
                raise ModelError(f"{name} maneuver group does not sum to 1 at speed {v} "
                                 f"(got {sums[bad[0]]!r})")

    def column(self, speed: float) -> np.ndarray:
        for k, v in enumerate(self.speeds):
            if math.isclose(v, speed, abs_tol=1e-9):
                return self.eps[:, k]
        raise ModelError(f"no maneuver column for speed {speed}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ManeuverTable":
        eps = [doc["epsilon"][f"e{i}"] for i in range(10)]
        return cls(tuple(doc["speeds"]), np.array(eps, dtype=float))

    @classmethod
    def bundled(cls, vmax: int = 15) -> "ManeuverTable":
        return cls.from_dict(load_bundled_table(vmax))


def load_bundled_table(vmax: int = 15) -> dict:
    text = resources.files("vvsearch.data").joinpath(f"maneuvers_{vmax}.json").read_text()
    return json.loads(text, parse_float=Decimal)


def group_sums_exact(doc: dict) -> dict[str, list[Decimal]]:
    """Per-group column sums of a maneuver table using exact decimal arithmetic."""
    out = {}
    for name, grp in GROUPS.items():
        cols = len(doc["speeds"])
        out[name] = [sum((Decimal(str(doc["epsilon"][f"e{i}"][c])) for i in grp), Decimal(0))
                     for c in range(cols)]
    return out


@dataclass(frozen=True)
class SpeedTransitionFn:
    """Probabilities of (decelerate, hold, accelerate) by one speed step.

    Far from any intersection the target mostly holds its speed.  When
    approaching, the chance of slowing ramps up linearly over ``ramp``
    metres ending at the braking distance; inside the braking distance a
    target that is already too fast to stop in time may instead speed up
    (``p_acc_commit``).  For ``leave`` metres after an intersection the
    chance of speeding up is raised.
    """

    p_dec_far: float = 0.01
    p_acc_far: float = 0.02
    p_dec_near: float = 0.8
    p_acc_commit: float = 0.1
    p_acc_leave: float = 0.3
    ramp: float = 40.0
    leave: float = 30.0

    def __post_init__(self):
        for name in ("p_dec_far", "p_acc_far", "p_dec_near", "p_acc_commit", "p_acc_leave"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ModelError(f"{name} must lie in [0, 1]")
        if self.p_dec_near < self.p_dec_far:
            raise ModelError("p_dec_near must be >= p_dec_far")
        if self.p_dec_near + self.p_acc_commit > 1 or self.p_dec_far + self.p_acc_leave > 1:
            raise ModelError("speed-change probabilities exceed 1")

    @staticmethod
    def braking_distance(v: float, speeds) -> float:
        """Distance covered while stepping down from v to the slowest speed."""
        return float(sum(s for s in speeds if min(speeds) < s <= v + 1e-9))

    def probs(self, v: float, ahead: float, behind: float, speeds) -> tuple[float, float, float]:
        speeds = tuple(speeds)
        if behind <= self.leave and behind < ahead:
            p_dec, p_acc = self.p_dec_far, self.p_acc_leave
        else:
            brake = self.braking_distance(v, speeds)
            if ahead <= brake:
                frac = 1.0
            elif ahead >= brake + self.ramp:
                frac = 0.0
            else:
                frac = (brake + self.ramp - ahead) / self.ramp
            p_dec = self.p_dec_far + frac * (self.p_dec_near - self.p_dec_far)
            p_acc = self.p_acc_far * (1.0 - frac)
            if ahead < brake and v > min(speeds):
                p_acc = self.p_acc_commit
        if v >= max(speeds) - 1e-9:
            p_acc = 0.0
        if v <= min(speeds) + 1e-9:
            p_dec = 0.0
        return p_dec, 1.0 - p_dec - p_acc, p_acc

    @classmethod
    def from_dict(cls, doc: dict) -> "SpeedTransitionFn":
        return cls(**{k: float(v) for k, v in doc.items()})


# ---------------------------------------------------------------------------
# the target graph
# ---------------------------------------------------------------------------

@dataclass
class TargetGraph:
    points: np.ndarray          # (P, 2)
    point_adj: list[list[int]]  # sampled-order neighbours of each point
    is_intersection: np.ndarray  # (P,) bool, True for road-network nodes
    is_decision: np.ndarray      # (P,) bool, intersections that are not straight pass-throughs
    poses: np.ndarray           # (Q, 3) int: point, kind, neighbour point
    speeds: np.ndarray          # (m,)
    l_c: float
    dt: float = 1.0
    ahead: np.ndarray = field(default=None)   # (Q,) distance to next decision point
    behind: np.ndarray = field(default=None)  # (Q,) distance since previous decision point

    @property
    def m(self) -> int:
        return len(self.speeds)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_nodes(self) -> int:
        return len(self.poses) * self.m

    @property
    def node_point(self) -> np.ndarray:
        return np.repeat(self.poses[:, 0], self.m)

    @property
    def node_speed(self) -> np.ndarray:
        return np.tile(self.speeds, len(self.poses))

    @property
    def node_xy(self) -> np.ndarray:
        return self.points[self.node_point]

    def node_index(self, pose: int, speed_idx: int) -> int:
        return pose * self.m + speed_idx

    def pose_direction(self, q: int) -> np.ndarray:
        p, kind, nb = self.poses[q]
        d = self.points[p] - self.points[nb] if kind == ARRIVE else self.points[nb] - self.points[p]
        return d / np.linalg.norm(d)

    @property
    def node_velocity(self) -> np.ndarray:
        dirs = np.array([self.pose_direction(q) for q in range(len(self.poses))])
        return np.repeat(dirs, self.m, axis=0) * self.node_speed[:, None]

    @property
    def dist_to_intersection(self) -> np.ndarray:
        return np.repeat(self.ahead, self.m)

    def point_csgraph(self) -> sp.csr_matrix:
        rows, cols, w = [], [], []
        for i, nbrs in enumerate(self.point_adj):
            for j in nbrs:
                rows.append(i)
                cols.append(j)
                w.append(float(np.linalg.norm(self.points[i] - self.points[j])))
        n = self.n_points
        return sp.csr_matrix((w, (rows, cols)), shape=(n, n))

    def uniform_belief(self) -> np.ndarray:
        return np.full(self.n_nodes, 1.0 / self.n_nodes)


def validate_speeds(speeds, l_c: float, dt: float, allow_stationary: bool = False) -> np.ndarray:
    v = np.asarray(speeds, dtype=float)
    if v.ndim != 1 or len(v) == 0:
        raise ModelError("speed set must be non-empty")
    if np.any(np.diff(v) <= 0):
        raise ModelError("speeds must be strictly increasing")
    if v[0] < 0 or (v[0] == 0 and not allow_stationary):
        raise ModelError("speeds must be positive (zero only when stationary targets are enabled)")
    step = l_c / dt
    cells = v / step
    if np.any(np.abs(cells - np.round(cells)) > 1e-9):
        raise ModelError(f"speeds must be multiples of l_c/dt = {step}")
    if len(v) > 1 and np.any(np.abs(np.diff(v) - step) > 1e-9):
        raise ModelError(f"adjacent speeds must differ by l_c/dt = {step}")
    return v


def build_target_graph(road: RoadNetwork, l_c: float, speeds, dt: float = 1.0,
                       allow_stationary: bool = False) -> TargetGraph:
    if not l_c > 0:
        raise ModelError("l_c must be positive")
    v = validate_speeds(speeds, l_c, dt, allow_stationary)
    nodes0 = np.asarray(road.nodes, dtype=float).reshape(-1, 2)
    pts = [p for p in nodes0]
    adj: list[list[int]] = [[] for _ in pts]

    def link(a, b):
        adj[a].append(b)
        adj[b].append(a)

    for i, j in road.edges:
        a, b = nodes0[i], nodes0[j]
        length = float(np.linalg.norm(b - a))
        u = (b - a) / length
        # interior samples exactly l_c apart from a, last interval <= l_c
        n_in = max(int(math.ceil(length / l_c - 1e-9)) - 1, 0)
        prev = i
        for k in range(1, n_in + 1):
            pts.append(a + k * l_c * u)
            adj.append([])
            cur = len(pts) - 1
            link(prev, cur)
            prev = cur
        link(prev, j)
    points = np.array(pts)
    n0 = len(nodes0)
    is_int = np.zeros(len(points), dtype=bool)
    is_int[:n0] = True
    is_dec = is_int.copy()
    for n in range(n0):
        if len(adj[n]) == 2:
            d1 = points[adj[n][0]] - points[n]
            d2 = points[adj[n][1]] - points[n]
            cos = d1 @ d2 / (np.linalg.norm(d1) * np.linalg.norm(d2))
            if cos < -1 + 1e-9:
                is_dec[n] = False
    poses = []
    for p in range(len(points)):
        if is_int[p]:
            for nb in adj[p]:
                poses.append((p, ARRIVE, nb))
                poses.append((p, DEPART, nb))
        else:
            for nb in adj[p]:
                poses.append((p, MOVE, nb))
    g = TargetGraph(points, adj, is_int, is_dec, np.array(poses, dtype=np.int64).reshape(-1, 3),
                    v, float(l_c), float(dt))
    _annotate_distances(g)
    return g


def _walk(g: TargetGraph, cur: int, nxt: int) -> float:
    """Distance from ``cur`` moving toward ``nxt`` until a decision point."""
    dist = 0.0
    for _ in range(g.n_points + 1):
        dist += float(np.linalg.norm(g.points[nxt] - g.points[cur]))
        if g.is_decision[nxt]:
            return dist
        nbrs = g.point_adj[nxt]
        if len(nbrs) != 2:
            return dist
        cur, nxt = nxt, nbrs[0] if nbrs[1] == cur else nbrs[1]
    return math.inf


def _other(g: TargetGraph, p: int, nb: int) -> int | None:
    nbrs = g.point_adj[p]
    if len(nbrs) != 2:
        return None
    return nbrs[0] if nbrs[1] == nb else nbrs[1]


def _annotate_distances(g: TargetGraph) -> None:
    ahead = np.zeros(len(g.poses))
    behind = np.zeros(len(g.poses))
    for q, (p, kind, nb) in enumerate(g.poses):
        other = _other(g, p, nb)
        if kind == MOVE:
            ahead[q] = _walk(g, p, nb)
            behind[q] = _walk(g, p, other)
        elif kind == ARRIVE:
            ahead[q] = 0.0 if g.is_decision[p] or other is None else _walk(g, p, other)
            behind[q] = _walk(g, p, nb)
        else:
            ahead[q] = _walk(g, p, nb)
            behind[q] = 0.0 if g.is_decision[p] or other is None else _walk(g, p, other)
    g.ahead, g.behind = ahead, behind


# ---------------------------------------------------------------------------
# the Markov model
# ---------------------------------------------------------------------------

def maneuver_options(g: TargetGraph, n: int, came_from: int, eps: np.ndarray) -> list[tuple[int, float]]:
    """Outgoing neighbours of intersection point ``n`` with their probabilities."""
    nbrs = g.point_adj[n]
    if len(nbrs) == 1:
        return [(came_from, 1.0)]
    rest = [k for k in nbrs if k != came_from]
    if len(nbrs) == 2:
        return [(rest[0], 1.0)]
    d_in = g.points[n] - g.points[came_from]
    angles = []
    for k in rest:
        d_out = g.points[k] - g.points[n]
        angles.append(math.atan2(d_in[0] * d_out[1] - d_in[1] * d_out[0], d_in @ d_out))
    order = sorted(range(len(rest)), key=lambda t: -angles[t])  # left to right
    out: list[tuple[int, float]] = []
    if len(nbrs) == 4:
        out.append((came_from, eps[0]))
        for t, e in zip(order, (eps[1], eps[2], eps[3])):
            out.append((rest[t], e))
    elif len(nbrs) == 3:
        straight = min(range(2), key=lambda t: abs(angles[t]))
        if abs(angles[straight]) <= math.pi / 4:
            out.append((came_from, eps[7]))
            out.append((rest[straight], eps[8]))
            out.append((rest[1 - straight], eps[9]))
        else:
            out.append((came_from, eps[4]))
            out.append((rest[order[0]], eps[5]))
            out.append((rest[order[1]], eps[6]))
    else:
        out = [(k, 1.0 / len(rest)) for k in rest]
    return [(k, float(p)) for k, p in out if p > 0]


def advance_pose(g: TargetGraph, q: int, cells: int, eps: np.ndarray | None) -> dict[int, float]:
    """Distribution over end poses after moving ``cells`` sample intervals."""
    p, kind, nb = (int(x) for x in g.poses[q])
    if cells == 0:
        return {q: 1.0}
    pose_id = _pose_lookup(g)
    out: dict[int, float] = {}

    def branch(cur, prev):
        if g.is_intersection[cur]:
            return maneuver_options(g, cur, prev, eps)
        return [(_other(g, cur, prev), 1.0)]

    def walk(cur, nxt, left, prob):
        prev, cur = cur, nxt
        left -= 1
        if left == 0:
            if g.is_intersection[cur]:
                key = pose_id[(cur, ARRIVE, prev)]
            else:
                key = pose_id[(cur, MOVE, _other(g, cur, prev))]
            out[key] = out.get(key, 0.0) + prob
            return
        for k, pk in branch(cur, prev):
            walk(cur, k, left, prob * pk)

    if kind == ARRIVE:
        for k, pk in maneuver_options(g, p, nb, eps):
            walk(p, k, cells, pk)
    else:
        walk(p, nb, cells, 1.0)
    return out


def _pose_lookup(g: TargetGraph) -> dict:
    cache = getattr(g, "_pose_id", None)
    if cache is None:
        cache = {tuple(int(x) for x in row): i for i, row in enumerate(g.poses)}
        g._pose_id = cache
    return cache


@dataclass
class MarkovModel:
    Z: sp.csr_matrix
    speeds: np.ndarray
    dt: float

    def __post_init__(self):
        self._ZT = self.Z.T.tocsr()

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def propagate(self, p: np.ndarray, steps: int = 1) -> np.ndarray:
        """Mass-conserving forward action: p <- Z^T p, ``steps`` times."""
        out = np.asarray(p, dtype=float)
        for _ in range(int(steps)):
            out = self._ZT @ out
        return out

    def row(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.Z.indptr[s], self.Z.indptr[s + 1]
        return self.Z.indices[lo:hi], self.Z.data[lo:hi]

    def sample_step(self, s: int, rng: np.random.Generator) -> int:
        """Inverse-CDF draw of the successor of state ``s``."""
        idx, prob = self.row(s)
        cdf = np.cumsum(prob)
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        return int(idx[min(k, len(idx) - 1)])


def build_markov_matrix(g: TargetGraph, maneuvers: ManeuverTable,
                        speed_fn: SpeedTransitionFn | None = None) -> MarkovModel:
    speed_fn = speed_fn or SpeedTransitionFn()
    m = g.m
    speeds = tuple(float(v) for v in g.speeds)
    step = g.l_c / g.dt
    rows, cols, vals = [], [], []
    for q in range(len(g.poses)):
        for si, v in enumerate(speeds):
            cells = int(round(v / step))
            eps = maneuvers.column(v) if cells > 0 else None
            ends = advance_pose(g, q, cells, eps)
            src = q * m + si
            for qe, pe in ends.items():
                p_dec, p_hold, p_acc = speed_fn.probs(v, g.ahead[qe], g.behind[qe], speeds)
                for dsi, pv in ((-1, p_dec), (0, p_hold), (1, p_acc)):
                    if pv <= 0:
                        continue
                    rows.append(src)
                    cols.append(qe * m + si + dsi)
                    vals.append(pe * pv)
    n = g.n_nodes
    Z = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    Z.sum_duplicates()
    return MarkovModel(Z, g.speeds, g.dt)


def sample_poi_step(model: MarkovModel, s: int, rng: np.random.Generator) -> int:
    return model.sample_step(s, rng)


def all_pairs_graph_distance(g: TargetGraph, method: str = "FW") -> np.ndarray:
    """Along-road shortest path lengths between sampled points (inf if unreachable)."""
    return shortest_path(g.point_csgraph(), method=method, directed=False)
