"""Hand-built example environments."""

from __future__ import annotations

from .geometry import Environment, Obstacle, RoadNetwork


def u_environment(h_feasible: float = 120.0) -> Environment:
    """A U-shaped road wrapped around a single central building (200 m square map)."""
    road = RoadNetwork(((-50.0, 50.0), (-50.0, -50.0), (50.0, -50.0), (50.0, 50.0)),
                       ((0, 1), (1, 2), (2, 3)))
    building = Obstacle.box(-30.0, -30.0, 30.0, 30.0, 40.0)
    return Environment((building,), (-100.0, 100.0, -100.0, 100.0), road, h_feasible)
