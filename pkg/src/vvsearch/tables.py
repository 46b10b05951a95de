"""Pooled visibility and reachable-visibility tables used by the planner.

All tables are indexed by grid cell at some pooling stride and hold one
bit per road sample point.  Reachable-visibility rows are built lazily
because a search only ever touches a small fraction of them.
"""

from __future__ import annotations

import numpy as np

from .gridops import saturate, convolve
from .reachability import ReachTable


def pool_slices(slices: np.ndarray, stride: int) -> np.ndarray:
    """Block-OR of every point's VV plane: (P, nx, ny) -> (P, ceil(nx/s), ceil(ny/s))."""
    if stride == 1:
        return slices.copy()
    n, nx, ny = slices.shape
    px, py = -nx % stride, -ny % stride
    padded = np.pad(slices, ((0, 0), (0, px), (0, py)))
    return padded.reshape(n, padded.shape[1] // stride, stride,
                          padded.shape[2] // stride, stride).any(axis=(2, 4))


class PlannerTables:
    def __init__(self, slices: np.ndarray, node_point: np.ndarray, reach: ReachTable,
                 strides=(1,), heading_union: bool = False):
        self.slices = slices
        self.node_point = np.asarray(node_point)
        self.n_points = slices.shape[0]
        self.fine_shape = slices.shape[1:]
        self.reach = reach
        self.heading_union = heading_union
        self._pooled: dict[int, np.ndarray] = {}
        self._packed: dict[int, np.ndarray] = {}
        self._kernels: dict[tuple, np.ndarray] = {}
        self._fr: dict[tuple, np.ndarray] = {}
        for s in sorted(set(strides) | {1}):
            self.pooled(s)

    # -- visibility ---------------------------------------------------------

    def pooled(self, s: int) -> np.ndarray:
        """(ncx, ncy, P) bool: which points are visible from anywhere in the block."""
        if s not in self._pooled:
            p = pool_slices(self.slices, s)
            self._pooled[s] = np.ascontiguousarray(np.moveaxis(p, 0, -1))
        return self._pooled[s]

    def packed(self, s: int) -> np.ndarray:
        if s not in self._packed:
            self._packed[s] = np.packbits(self.pooled(s), axis=-1)
        return self._packed[s]

    def coarse_shape(self, s: int) -> tuple[int, int]:
        return self.pooled(s).shape[:2]

    def visible_points(self, cell, s: int) -> np.ndarray:
        """Points visible from coarse cell ``cell`` at stride ``s`` (all False off-grid)."""
        cx, cy = cell
        ncx, ncy = self.coarse_shape(s)
        if not (0 <= cx < ncx and 0 <= cy < ncy):
            return np.zeros(self.n_points, dtype=bool)
        return self.pooled(s)[cx, cy]

    # -- reachable visibility -------------------------------------------------

    def _fine_offsets(self, h: int, k: int) -> np.ndarray:
        if self.heading_union:
            m = self.reach.heading_union_matrix(k)
        else:
            m = self.reach.chain(h, k).matrix
        w = (m.shape[0] - 1) // 2
        b, c = np.nonzero(m)
        return np.column_stack([b - w, c - w])

    def coarse_kernel(self, h: int, k: int, s: int, sub: tuple[int, int]) -> np.ndarray:
        """Coarse-cell offsets holding any fine cell reachable from sub-position ``sub``."""
        key = (h if not self.heading_union else -1, k, s, sub)
        if key not in self._kernels:
            o = self._fine_offsets(h, k)
            co = np.floor_divide(o + np.asarray(sub), s)
            self._kernels[key] = np.unique(co, axis=0)
        return self._kernels[key]

    def fr_row(self, fine_cell, h: int, k: int, s: int) -> np.ndarray:
        """Packed bits: points whose stride-``s`` VV is reachable in exactly k steps."""
        fx, fy = fine_cell
        key = (fx, fy, h if not self.heading_union else -1, k, s)
        row = self._fr.get(key)
        if row is not None:
            return row
        sub = (fx % s, fy % s)
        ker = self.coarse_kernel(h, k, s, sub)
        cx, cy = fx // s + ker[:, 0], fy // s + ker[:, 1]
        ncx, ncy = self.coarse_shape(s)
        ok = (cx >= 0) & (cx < ncx) & (cy >= 0) & (cy < ncy)
        pk = self.packed(s)
        if ok.any():
            row = np.bitwise_or.reduce(pk[cx[ok], cy[ok]], axis=0)
        else:
            row = np.zeros(pk.shape[-1], dtype=np.uint8)
        self._fr[key] = row
        return row

    def fr_bool(self, fine_cell, h: int, k: int, s: int) -> np.ndarray:
        return np.unpackbits(self.fr_row(fine_cell, h, k, s), count=self.n_points).astype(bool)


def frvvss_matrix(reach_matrix: np.ndarray, vv_slice: np.ndarray) -> np.ndarray:
    """sat(R * a, 0, 1): start cells from which the VV can be reached (matrix route)."""
    return saturate(convolve(reach_matrix.astype(np.int64), vv_slice.astype(np.int64)), 0, 1)
