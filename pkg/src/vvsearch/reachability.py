"""Discretized reachability of a variable-speed Dubins vehicle.

A one-step primitive takes the vehicle from the centre of its cell at a
grid heading to the centre of another cell at another grid heading in
exactly one timestep.  Multi-step sets are unions of chained primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dubins import dubins_lengths, dubins_shortest_path, DubinsPath


@dataclass(frozen=True)
class VehicleLimits:
    v_min: float
    v_max: float
    turn_rate: float
    dt: float = 1.0

    def __post_init__(self):
        if not 0 < self.v_min <= self.v_max:
            raise ValueError("need 0 < v_min <= v_max")
        if not self.turn_rate > 0:
            raise ValueError("turn rate must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def v_nominal(self) -> float:
        return 0.5 * (self.v_min + self.v_max)


def reach_half_width(v_max: float, k: int, dt: float, l_v: float) -> int:
    return int(math.ceil(v_max * k * dt / l_v - 1e-9))


@dataclass
class OneStep:
    """Primitives from the origin cell for every start heading."""

    limits: VehicleLimits
    l_v: float
    n_headings: int
    w: int
    # per start heading: arrays of (db, dc, h1, v, length)
    prims: list[np.ndarray]

    def matrix(self, h0: int) -> np.ndarray:
        m = np.zeros((2 * self.w + 1, 2 * self.w + 1), dtype=bool)
        p = self.prims[h0]
        m[p[:, 0].astype(int) + self.w, p[:, 1].astype(int) + self.w] = True
        return m

    def states(self, h0: int) -> np.ndarray:
        """(2w+1, 2w+1, N_psi) mask of reachable (cell, final heading)."""
        s = np.zeros((2 * self.w + 1, 2 * self.w + 1, self.n_headings), dtype=bool)
        p = self.prims[h0]
        s[p[:, 0].astype(int) + self.w, p[:, 1].astype(int) + self.w, p[:, 2].astype(int)] = True
        return s

    def witness(self, h0: int, db: int, dc: int, h1: int) -> tuple[float, float]:
        """(speed used for the turn radius, path length) of a primitive."""
        p = self.prims[h0]
        hit = np.nonzero((p[:, 0] == db) & (p[:, 1] == dc) & (p[:, 2] == h1))[0]
        if len(hit) == 0:
            raise KeyError((h0, db, dc, h1))
        row = p[hit[0]]
        return float(row[3]), float(row[4])

    def path(self, h0: int, db: int, dc: int, h1: int, origin=(0.0, 0.0)) -> DubinsPath:
        v, _ = self.witness(h0, db, dc, h1)
        dpsi = 2 * math.pi / self.n_headings
        q0 = (origin[0], origin[1], h0 * dpsi)
        q1 = (origin[0] + db * self.l_v, origin[1] + dc * self.l_v, h1 * dpsi)
        return dubins_shortest_path(q0, q1, v / self.limits.turn_rate)


def speed_samples(limits: VehicleLimits, n: int) -> np.ndarray:
    if n <= 1 or limits.v_min == limits.v_max:
        return np.array([limits.v_min])
    return np.linspace(limits.v_min, limits.v_max, n)


def _base_primitives(limits, l_v, n_headings, h0, w, speeds, tol=1e-9) -> np.ndarray:
    dpsi = 2 * math.pi / n_headings
    b, c, h1 = np.meshgrid(np.arange(-w, w + 1), np.arange(-w, w + 1), np.arange(n_headings), indexing="ij")
    b, c, h1 = b.ravel(), c.ravel(), h1.ravel()
    lo, hi = limits.v_min * limits.dt - tol, limits.v_max * limits.dt + tol
    found = np.zeros(b.shape, dtype=bool)
    wit_v = np.zeros(b.shape)
    wit_L = np.zeros(b.shape)
    for v in speeds:
        L = dubins_lengths((0.0, 0.0, h0 * dpsi), b * l_v, c * l_v, h1 * dpsi, v / limits.turn_rate)
        ok = (L >= lo) & (L <= hi) & ~found
        wit_v[ok] = v
        wit_L[ok] = L[ok]
        found |= ok
    idx = np.nonzero(found)[0]
    return np.column_stack([b[idx], c[idx], h1[idx], wit_v[idx], wit_L[idx]])


def _rotate_prims(p: np.ndarray, quarter_turns: int, n_headings: int) -> np.ndarray:
    out = p.copy()
    q = n_headings // 4
    for _ in range(quarter_turns % 4):
        b, c = out[:, 0].copy(), out[:, 1].copy()
        out[:, 0], out[:, 1] = -c, b
        out[:, 2] = (out[:, 2] + q) % n_headings
    return out


def build_reach_one_step(limits: VehicleLimits, l_v: float, n_headings: int = 16,
                         n_speed_samples: int = 5, speeds=None) -> OneStep:
    """One-step primitives for every start heading.

    Sets for start headings in [0, pi/2) are computed directly; the rest
    are quarter-turn rotations of those.
    """
    if n_headings % 4:
        raise ValueError("the heading count must be a multiple of 4")
    w = reach_half_width(limits.v_max, 1, limits.dt, l_v)
    speeds = speed_samples(limits, n_speed_samples) if speeds is None else np.asarray(speeds, float)
    q = n_headings // 4
    base = [_base_primitives(limits, l_v, n_headings, h0, w, speeds) for h0 in range(q)]
    prims = []
    for h0 in range(n_headings):
        k, j = divmod(h0, q)
        prims.append(_rotate_prims(base[j], k, n_headings))
    return OneStep(limits, float(l_v), n_headings, w, prims)


@dataclass
class ChainSet:
    """Reachable (cell, heading) states after exactly k primitives from one start heading."""

    k: int
    w: int
    states: np.ndarray  # (2w+1, 2w+1, N_psi) bool
    prev: np.ndarray | None = field(default=None, repr=False)  # (2w+1, 2w+1, N_psi, 3) int16

    @property
    def matrix(self) -> np.ndarray:
        return self.states.any(axis=2)


class ReachTable:
    """One-step primitives plus lazily built k-step chain sets."""

    def __init__(self, one: OneStep):
        self.one = one
        self.n_headings = one.n_headings
        self._chains: dict[tuple[int, int], ChainSet] = {}
        self._offsets: dict[tuple[int, int], np.ndarray] = {}

    @property
    def l_v(self) -> float:
        return self.one.l_v

    @property
    def limits(self) -> VehicleLimits:
        return self.one.limits

    def w(self, k: int) -> int:
        return reach_half_width(self.one.limits.v_max, k, self.one.limits.dt, self.one.l_v)

    def chain(self, h0: int, k: int) -> ChainSet:
        if k < 1:
            raise ValueError("k must be >= 1")
        key = (h0, k)
        if key in self._chains:
            return self._chains[key]
        q = self.n_headings // 4
        turns, base = divmod(h0, q)
        if turns:
            src = self.chain(base, k)
            cs = _rotate_chain(src, turns, self.n_headings)
        elif k == 1:
            st = self.one.states(h0)
            prev = np.full(st.shape + (3,), -1, dtype=np.int16)
            prev[..., 2] = np.where(st, h0, -1)
            prev[..., 0] = np.where(st, 0, -1)
            prev[..., 1] = np.where(st, 0, -1)
            cs = ChainSet(1, self.one.w, st, prev)
        else:
            cs = self._compose(self.chain(h0, k - 1), k)
        self._chains[key] = cs
        return cs

    def _compose(self, last: ChainSet, k: int) -> ChainSet:
        w = self.w(k)
        n = 2 * w + 1
        states = np.zeros((n, n, self.n_headings), dtype=bool)
        prev = np.full((n, n, self.n_headings, 3), -1, dtype=np.int16)
        wl = last.w
        off = w - wl
        for hm in range(self.n_headings):
            mid = last.states[:, :, hm]
            if not mid.any():
                continue
            mb, mc = np.nonzero(mid)
            for db, dc, h1 in self.one.prims[hm][:, :3].astype(int):
                # every (mb, mc) shifted by (db, dc)
                tb = mb + off + db
                tc = mc + off + dc
                new = ~states[tb, tc, h1]
                if new.any():
                    states[tb[new], tc[new], h1] = True
                    prev[tb[new], tc[new], h1, 0] = mb[new] - wl
                    prev[tb[new], tc[new], h1, 1] = mc[new] - wl
                    prev[tb[new], tc[new], h1, 2] = hm
        return ChainSet(k, w, states, prev)

    def offsets(self, h0: int, k: int) -> np.ndarray:
        """(n, 3) int array of (db, dc, h1) reachable in exactly k steps."""
        key = (h0, k)
        if key not in self._offsets:
            cs = self.chain(h0, k)
            b, c, h = np.nonzero(cs.states)
            self._offsets[key] = np.column_stack([b - cs.w, c - cs.w, h]).astype(np.int64)
        return self._offsets[key]

    def replay(self, h0: int, k: int, db: int, dc: int, h1: int) -> list[tuple[int, int, int]]:
        """Intermediate (db, dc, heading) states of a k-step witness chain."""
        out = [(db, dc, h1)]
        for kk in range(k, 1, -1):
            cs = self.chain(h0, kk)
            pb, pc, ph = (int(v) for v in cs.prev[db + cs.w, dc + cs.w, h1])
            if ph < 0:
                raise KeyError((h0, k, db, dc, h1))
            db, dc, h1 = pb, pc, ph
            out.append((db, dc, h1))
        out.reverse()
        return out

    def heading_union_matrix(self, k: int) -> np.ndarray:
        return np.any([self.chain(h, k).matrix for h in range(self.n_headings)], axis=0)


def _rotate_chain(cs: ChainSet, turns: int, n_headings: int) -> ChainSet:
    q = n_headings // 4
    st = cs.states
    prev = cs.prev.copy()
    for _ in range(turns % 4):
        # (b, c) -> (-c, b): new[i, j] = old[j, n-1-i]  i.e. np.rot90 with k=1 on axes (0, 1)
        st = np.roll(np.rot90(st, 1, axes=(0, 1)), q, axis=2)
        prev = np.roll(np.rot90(prev, 1, axes=(0, 1)), q, axis=2)
        valid = prev[..., 2] >= 0
        pb, pc = prev[..., 0].copy(), prev[..., 1].copy()
        prev[..., 0] = np.where(valid, -pc, -1)
        prev[..., 1] = np.where(valid, pb, -1)
        prev[..., 2] = np.where(valid, (prev[..., 2] + q) % n_headings, -1)
    return ChainSet(cs.k, cs.w, np.ascontiguousarray(st), np.ascontiguousarray(prev))


def reach_matrix(table: ReachTable, cell: tuple[int, int], h0: int, k: int, grid_shape) -> np.ndarray:
    """R_k(h0) translated onto the world grid with its centre at ``cell``, clipped."""
    nx, ny = grid_shape
    ix, iy = cell
    if not (0 <= ix < nx and 0 <= iy < ny):
        raise ValueError(f"cell {cell} lies outside the grid")
    m = table.chain(h0, k).matrix
    w = (m.shape[0] - 1) // 2
    out = np.zeros((nx, ny), dtype=bool)
    x0, x1 = max(ix - w, 0), min(ix + w + 1, nx)
    y0, y1 = max(iy - w, 0), min(iy + w + 1, ny)
    out[x0:x1, y0:y1] = m[x0 - ix + w:x1 - ix + w, y0 - iy + w:y1 - iy + w]
    return out


def viability_kernel(table: ReachTable, grid_shape, max_iter: int | None = None) -> np.ndarray:
    """States (x, y, heading) from which the vehicle can stay on the grid indefinitely.

    Starts from every in-grid state and repeatedly drops states whose
    one-step successors all leave the grid or land on dropped states.
    """
    nx, ny = grid_shape
    H = table.n_headings
    w = table.w(1)
    V = np.ones((nx, ny, H), dtype=bool)
    offs = [table.offsets(h, 1) for h in range(H)]
    for _ in range(max_iter or nx * ny):
        P = np.zeros((nx + 2 * w, ny + 2 * w, H), dtype=bool)
        P[w:w + nx, w:w + ny] = V
        new = np.zeros_like(V)
        for h0, off in enumerate(offs):
            acc = np.zeros((nx, ny), dtype=bool)
            for db, dc, h1 in off.tolist():
                acc |= P[w + db:w + db + nx, w + dc:w + dc + ny, h1]
            new[:, :, h0] = V[:, :, h0] & acc
        if np.array_equal(new, V):
            break
        V = new
    return V
