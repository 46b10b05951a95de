"""Voxel visibility volumes: which airspace voxels see a given ground point."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .geometry import Environment, segments_blocked


@dataclass(frozen=True)
class VoxelGrid:
    origin: tuple[float, float, float]
    l_v: float
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        if not self.l_v > 0:
            raise ValueError("voxel side must be positive")
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("voxel counts must be >= 1")

    @classmethod
    def for_environment(cls, env: Environment, l_v: float) -> "VoxelGrid":
        x0, x1, y0, y1 = env.bounds
        nx = int(math.ceil((x1 - x0) / l_v - 1e-9))
        ny = int(math.ceil((y1 - y0) / l_v - 1e-9))
        nz = int(math.ceil(env.h_feasible / l_v - 1e-9))
        return cls((x0, y0, 0.0), float(l_v), nx, ny, nz)

    @property
    def shape2(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def centers_x(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.l_v

    def centers_y(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.l_v

    def center_z(self, k: int) -> float:
        return self.origin[2] + (k + 0.5) * self.l_v

    def altitude_index(self, h: float) -> int:
        """Plane k with k*l_v <= h <= (k+1)*l_v.

        At an exact multiple both neighbours qualify; the plane whose floor
        sits at h is used (h=75, l_v=5 gives 15).
        """
        k = int(math.floor((h - self.origin[2]) / self.l_v + 1e-9))
        if not 0 <= k < self.nz:
            raise ValueError(f"altitude {h} lies outside the voxel grid")
        return k

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.l_v))
        iy = int(math.floor((y - self.origin[1]) / self.l_v))
        return ix, iy

    def in_grid(self, ix, iy) -> bool:
        return 0 <= ix < self.nx and 0 <= iy < self.ny

    def cell_center(self, ix, iy) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.l_v, self.origin[1] + (iy + 0.5) * self.l_v)


def _in_bounds(env: Environment, g) -> bool:
    x0, x1, y0, y1 = env.bounds
    return x0 <= g[0] <= x1 and y0 <= g[1] <= y1


def _visible_points(env, g, pts, l_max, corners: bool, l_v: float) -> np.ndarray:
    """Visibility of ground point g from each voxel center in ``pts`` (N, 3)."""
    target = np.array([g[0], g[1], 0.0])
    d = np.linalg.norm(pts - target, axis=1)
    ok = (d <= l_max) & (pts[:, 2] > env.h_building) & (pts[:, 2] < env.h_feasible)
    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return ok
    if not corners:
        ok[idx] = ~segments_blocked(pts[idx], target[None], env)
        return ok
    half = l_v / 2
    for sx, sy, sz in product((-half, half), repeat=3):
        if len(idx) == 0:
            break
        c = pts[idx] + np.array([sx, sy, sz])
        good = ~segments_blocked(c, target[None], env)
        ok[idx[~good]] = False
        idx = idx[good]
    return ok


def compute_vv(env: Environment, g, l_max: float, grid: VoxelGrid, corners: bool = False) -> np.ndarray:
    """Binary visibility tensor (nx, ny, nz) for ground point ``g``.

    A voxel is set when its center lies in the feasible airspace, within
    ``l_max`` of the ground point, and the straight segment to it clears
    every obstacle.  ``corners=True`` additionally demands all eight voxel
    corners see the point (a conservative variant).
    """
    out = np.zeros((grid.nx, grid.ny, grid.nz), dtype=bool)
    if not _in_bounds(env, g):
        warnings.warn(f"ground point {tuple(g)} lies outside the environment; empty VV", stacklevel=2)
        return out
    xs, ys = grid.centers_x(), grid.centers_y()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    for k in range(grid.nz):
        z = grid.center_z(k)
        if not env.h_building < z < env.h_feasible:
            continue
        pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])
        out[:, :, k] = _visible_points(env, g, pts, l_max, corners, grid.l_v).reshape(X.shape)
    return out


def slice_at_altitude(tensor: np.ndarray, grid: VoxelGrid, h_uav: float) -> np.ndarray:
    return tensor[:, :, grid.altitude_index(h_uav)].copy()


def compute_slice(env: Environment, g, l_max: float, grid: VoxelGrid, h_uav: float,
                  corners: bool = False) -> np.ndarray:
    """The altitude plane of the visibility tensor, without building the full tensor."""
    k = grid.altitude_index(h_uav)
    out = np.zeros(grid.shape2, dtype=bool)
    if not _in_bounds(env, g):
        warnings.warn(f"ground point {tuple(g)} lies outside the environment; empty VV", stacklevel=2)
        return out
    z = grid.center_z(k)
    xs, ys = grid.centers_x(), grid.centers_y()
    # only cells inside the sensing disc need a ray test
    ix = np.nonzero(np.abs(xs - g[0]) <= l_max)[0]
    iy = np.nonzero(np.abs(ys - g[1]) <= l_max)[0]
    if len(ix) == 0 or len(iy) == 0:
        return out
    X, Y = np.meshgrid(xs[ix], ys[iy], indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])
    vis = _visible_points(env, g, pts, l_max, corners, grid.l_v).reshape(X.shape)
    out[np.ix_(ix, iy)] = vis
    return out


def compute_all_slices(env: Environment, points: np.ndarray, l_max: float, grid: VoxelGrid,
                       h_uav: float, corners: bool = False, progress=None) -> np.ndarray:
    """Altitude-plane VVs for every sampled road point, shape (P, nx, ny)."""
    out = np.zeros((len(points), grid.nx, grid.ny), dtype=bool)
    for i, g in enumerate(points):
        out[i] = compute_slice(env, g, l_max, grid, h_uav, corners)
        if progress is not None:
            progress(i + 1, len(points))
    return out


def point_mass(belief: np.ndarray, node_point: np.ndarray, n_points: int) -> np.ndarray:
    """Sum node probabilities onto their ground points."""
    return np.bincount(node_point, weights=belief, minlength=n_points)


def probabilistic_vv(belief, slices: np.ndarray, node_point: np.ndarray | None = None) -> np.ndarray:
    """Per-cell probability of viewing the target: sum_i p_i * slice(point_i).

    ``slices`` holds one VV plane per ground point; ``node_point`` maps
    belief entries to those points (identity when omitted).
    """
    belief = np.asarray(belief, dtype=float)
    if node_point is None:
        if len(belief) != len(slices):
            raise ValueError(f"belief length {len(belief)} != number of slices {len(slices)}")
        mass = belief
    else:
        if len(belief) != len(node_point):
            raise ValueError(f"belief length {len(belief)} != number of nodes {len(node_point)}")
        mass = point_mass(belief, node_point, len(slices))
    out = np.tensordot(mass, slices.astype(float), axes=(0, 0))
    return np.clip(out, 0.0, 1.0)


class VisibilityLookup:
    """f(q, g_s): is the UAV cell inside the VV of a target's ground point."""

    def __init__(self, slices: np.ndarray, grid: VoxelGrid, node_point: np.ndarray):
        self.slices = slices
        self.grid = grid
        self.node_point = np.asarray(node_point)
        # (nx, ny, P) layout so the per-cell vector is contiguous
        self.by_cell = np.ascontiguousarray(np.moveaxis(slices, 0, -1))

    @property
    def n_points(self) -> int:
        return self.slices.shape[0]

    def points_visible_from_cell(self, ix: int, iy: int) -> np.ndarray:
        if not self.grid.in_grid(ix, iy):
            return np.zeros(self.n_points, dtype=bool)
        return self.by_cell[ix, iy]

    def points_visible_from(self, x: float, y: float) -> np.ndarray:
        return self.points_visible_from_cell(*self.grid.cell_of(x, y))

    def nodes_visible_from(self, x: float, y: float) -> np.ndarray:
        return self.points_visible_from(x, y)[self.node_point]

    def visible(self, x: float, y: float, node: int) -> int:
        return int(self.nodes_visible_from(x, y)[node])
