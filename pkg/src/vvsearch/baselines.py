"""Coverage baselines: a boustrophedon lawnmower and replay of external tours."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dubins import DubinsPath, dubins_shortest_path
from .geometry import Environment
from .reachability import VehicleLimits


@dataclass(frozen=True)
class WaypointPath:
    waypoints: tuple[tuple[float, float, float], ...]  # (x, y, psi)
    speeds: tuple[float, ...]                          # speed on the leg leaving each waypoint
    turn_rate: float

    def __post_init__(self):
        if len(self.waypoints) == 0:
            raise ValueError("a path needs at least one waypoint")
        if len(self.speeds) != max(len(self.waypoints) - 1, 0):
            raise ValueError("need one speed per leg")

    def legs(self) -> list[DubinsPath]:
        cache = getattr(self, "_legs", None)
        if cache is None:
            cache = [dubins_shortest_path(a, b, v / self.turn_rate)
                     for a, b, v in zip(self.waypoints, self.waypoints[1:], self.speeds)]
            object.__setattr__(self, "_legs", cache)
        return cache

    @property
    def length(self) -> float:
        return float(sum(leg.length for leg in self.legs()))

    @property
    def duration(self) -> float:
        return float(sum(leg.length / v for leg, v in zip(self.legs(), self.speeds)))

    def to_json(self) -> str:
        rows = [{"x": x, "y": y, "psi": p, "speed": (self.speeds[i] if i < len(self.speeds) else None)}
                for i, (x, y, p) in enumerate(self.waypoints)]
        return json.dumps({"turn_rate": self.turn_rate, "waypoints": rows}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "WaypointPath":
        doc = json.loads(text)
        rows = doc["waypoints"]
        wps = tuple((float(r["x"]), float(r["y"]), float(r["psi"])) for r in rows)
        speeds = tuple(float(r["speed"]) for r in rows[:-1])
        return cls(wps, speeds, float(doc["turn_rate"]))

    @classmethod
    def load(cls, path) -> "WaypointPath":
        return cls.from_json(Path(path).read_text())


def sweep_lines(x_min: float, x_max: float, spacing: float, anchor: str = "center") -> list[float]:
    """x positions of the vertical sweep lines.

    ``center`` puts the first line half a spacing inside the left edge (over
    the road centrelines of a tile map); ``edge`` starts on the edge itself.
    """
    if not spacing > 0:
        raise ValueError("sweep spacing must be positive")
    width = x_max - x_min
    if anchor == "center":
        n = int(math.floor(width / spacing + 1e-9))
        return [x_min + spacing / 2 + i * spacing for i in range(max(n, 1))]
    if anchor == "edge":
        n = int(math.floor(width / spacing + 1e-9)) + 1
        return [x_min + i * spacing for i in range(n)]
    raise ValueError(f"unknown anchor '{anchor}'")


def lawnmower_plan(env: Environment, spacing: float, limits: VehicleLimits, q0,
                   anchor: str = "center") -> WaypointPath:
    """Vertical boustrophedon over the road network, entered from q0."""
    x0, x1, _, _ = env.bounds
    nodes = np.asarray(env.road.nodes, dtype=float)
    y_lo, y_hi = float(nodes[:, 1].min()), float(nodes[:, 1].max())
    xs = sweep_lines(x0, x1, spacing, anchor)
    # start on the end of the first line nearest the UAV
    going_up = abs(q0[1] - y_lo) <= abs(q0[1] - y_hi)
    if abs(q0[0] - xs[-1]) < abs(q0[0] - xs[0]):
        xs = xs[::-1]
    wps = [tuple(float(v) for v in q0)]
    for x in xs:
        if going_up:
            wps += [(x, y_lo, math.pi / 2), (x, y_hi, math.pi / 2)]
        else:
            wps += [(x, y_hi, 3 * math.pi / 2), (x, y_lo, 3 * math.pi / 2)]
        going_up = not going_up
    v = limits.v_nominal
    return WaypointPath(tuple(wps), (v,) * (len(wps) - 1), limits.turn_rate)


def follow_path(path: WaypointPath, t: float) -> tuple[float, float, float]:
    """Pose after flying for ``t`` seconds; the final pose is held afterwards."""
    if t < 0:
        raise ValueError("time must be non-negative")
    remaining = float(t)
    legs = path.legs()
    for leg, v in zip(legs, path.speeds):
        dur = leg.length / v
        if remaining <= dur:
            return leg.sample(remaining * v)
        remaining -= dur
    if legs:
        return legs[-1].end()
    return path.waypoints[0]
