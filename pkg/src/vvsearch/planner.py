"""Iterative-deepening A* over (UAV cell, heading, timestep, unobserved probability).

The search maximizes discounted probability of viewing the target over a
sparse set of future timesteps.  Later timesteps are planned on coarser
(max-pooled) grids so that the far horizon stays affordable.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .tables import PlannerTables

GOAL = -1
ZERO_UPV = 5e-13


@dataclass(frozen=True)
class Horizon:
    taus: tuple[int, ...] = (0, 1, 2, 3, 5, 7, 9, 13)
    strides: tuple[int, ...] = (1, 1, 1, 2, 2, 2, 4)  # stride of the node ending each interval

    def __post_init__(self):
        if len(self.taus) < 2:
            raise ValueError("a horizon needs a root and at least one future timestep")
        if any(b <= a for a, b in zip(self.taus, self.taus[1:])):
            raise ValueError("horizon timesteps must be strictly increasing")
        if len(self.strides) != len(self.taus) - 1:
            raise ValueError("need one stride per horizon interval")
        if any(s < 1 for s in self.strides):
            raise ValueError("strides must be >= 1")

    @classmethod
    def from_future(cls, future, strides=None) -> "Horizon":
        """Build from the future timesteps only (root 0 prepended)."""
        future = tuple(int(t) for t in future)
        strides = tuple(strides) if strides is not None else (1,) * len(future)
        return cls((0,) + future, strides)

    def stride(self, a: int) -> int:
        return 1 if a == 0 else self.strides[a - 1]

    def prefix(self, i: int) -> "Horizon":
        return Horizon(self.taus[: i + 1], self.strides[:i])

    @property
    def n(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class PlannerParams:
    gamma: float = 0.1
    beta: float = 1.0
    time_budget: float | None = None   # seconds, checked between expansions
    max_expansions: int | None = None  # per planning call, over all horizons
    heading_union: bool = False

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def upv_collect(upv: np.ndarray, visible_nodes: np.ndarray, beta: float) -> np.ndarray:
    """Remove the share of probability the UAV would observe."""
    out = upv.copy()
    out[visible_nodes] *= (1.0 - beta)
    return out


def upv_propagate(upv: np.ndarray, model, steps: int) -> np.ndarray:
    return model.propagate(upv, steps)


def transition_cost(visible_nodes: np.ndarray, upv: np.ndarray, tau: int, gamma: float) -> float:
    """1 - gamma^tau * (probability mass visible from the configuration)."""
    return 1.0 - gamma ** tau * float(upv[visible_nodes].sum())


def upv_key(upv: np.ndarray) -> bytes:
    q = np.round(upv / 1e-12).astype(np.int64)
    return hashlib.blake2b(q.tobytes(), digest_size=16).digest()


def is_zero(upv: np.ndarray) -> bool:
    return float(upv.max(initial=0.0)) < ZERO_UPV


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

@dataclass
class PathNode:
    cell: tuple[int, int]   # representative fine cell
    heading: int
    a: int                  # index into the horizon (GOAL for the sentinel)
    tau: int
    upv_id: int
    g: float                # cost so far
    h: float                # heuristic at this node


@dataclass
class SearchResult:
    path: list[PathNode]
    cost: float
    expansions: int
    complete: bool
    upvs: list = field(default_factory=list, repr=False)

    def terminal_upv(self) -> np.ndarray | None:
        if not self.path:
            return None
        return self.upvs[self.path[-1].upv_id]


class BudgetExceeded(Exception):
    pass


class Budget:
    """Wall-clock and expansion-count limits shared across one planning call."""

    def __init__(self, seconds: float | None = None, expansions: int | None = None):
        self.seconds = seconds
        self.expansions = expansions
        self.start = time.perf_counter()
        self.used = 0
        self.armed = True

    def tick(self):
        if not self.armed:
            return
        if self.expansions is not None and self.used >= self.expansions:
            raise BudgetExceeded
        if self.seconds is not None and time.perf_counter() - self.start >= self.seconds:
            raise BudgetExceeded
        self.used += 1


class Planner:
    """ID-A* planner bound to one environment's precomputed tables."""

    def __init__(self, tables: PlannerTables, model, horizon: Horizon, params: PlannerParams,
                 viable: np.ndarray | None = None):
        self.tables = tables
        self.viable = viable  # optional (nx, ny, headings) mask of states allowed as children
        self.model = model
        self.horizon = horizon
        self.params = params
        self.node_point = tables.node_point
        self.reach = tables.reach
        self.n_points = tables.n_points

    # -- helpers --------------------------------------------------------------

    def _point_mass(self, upv):
        return np.bincount(self.node_point, weights=upv, minlength=self.n_points)

    def _visible_nodes(self, fine_cell, s: int) -> np.ndarray:
        return self.tables.visible_points((fine_cell[0] // s, fine_cell[1] // s), s)[self.node_point]

    def _children(self, cell, heading, k: int, s: int):
        """Distinct (coarse cell, heading) children with their first fine representative."""
        nx, ny = self.tables.fine_shape
        off = self.reach.offsets(heading, k)
        fx = cell[0] + off[:, 0]
        fy = cell[1] + off[:, 1]
        ok = (fx >= 0) & (fx < nx) & (fy >= 0) & (fy < ny)
        if self.viable is not None:
            ok[ok] = self.viable[fx[ok], fy[ok], off[ok, 2]]
        seen = {}
        for x, y, h in zip(fx[ok].tolist(), fy[ok].tolist(), off[ok, 2].tolist()):
            key = (x // s, y // s, h)
            if key not in seen:
                seen[key] = (x, y)
        return [(rep, key[2]) for key, rep in seen.items()]

    def heuristic_terms(self, cell, heading, a: int, upv_masses: dict, horizon: Horizon) -> float:
        """Lower bound on the remaining cost from a node at horizon index ``a``."""
        gamma = self.params.gamma
        total = 0.0
        for i in range(a + 1, horizon.n):
            k = horizon.taus[i] - horizon.taus[a]
            s = horizon.stride(i)
            fr = self.tables.fr_bool(cell, heading, k, s)
            total += 1.0 - gamma ** horizon.taus[i] * float(upv_masses[i][fr].sum())
        return total

    def future_masses(self, upv, a: int, horizon: Horizon) -> dict:
        """Point masses of the uncollected UPV propagated to each later timestep."""
        out = {}
        cur = upv
        t = horizon.taus[a]
        for i in range(a + 1, horizon.n):
            cur = self.model.propagate(cur, horizon.taus[i] - t)
            t = horizon.taus[i]
            out[i] = self._point_mass(cur)
        return out

    def heuristic(self, cell, heading, upv, a: int, horizon: Horizon | None = None) -> float:
        horizon = horizon or self.horizon
        return self.heuristic_terms(cell, heading, a, self.future_masses(upv, a, horizon), horizon)

    # -- A* -------------------------------------------------------------------

    def astar(self, cell, heading, upv, horizon: Horizon, budget=None, use_heuristic=True,
              trace=None) -> SearchResult:
        """Minimum-cost path from the root to the goal sentinel over ``horizon``."""
        gamma, beta = self.params.gamma, self.params.beta
        upvs = [np.asarray(upv, dtype=float)]
        upv_ids = {upv_key(upvs[0]): 0}
        last = horizon.n - 1
        root = (tuple(cell), int(heading), 0, 0)
        best = {root: 0.0}
        parent = {root: None}
        info = {root: 0.0}
        counter = 0
        frontier = [(0.0, 0, counter, root)]
        expansions = 0
        goal_key = None
        _reps = {}
        while frontier:
            f, _, _, key = heapq.heappop(frontier)
            if key == ("goal",):
                goal_key = key
                break
            g = best[key]
            if f > g + info[key] + 1e-15 and use_heuristic:
                continue  # stale entry
            if not use_heuristic and f > g + 1e-15:
                continue
            if budget is not None:
                budget.tick()
            expansions += 1
            kcell, khead, a, uid = key
            fcell = _reps[key] if a > 0 else kcell  # keys hold coarse cells past the root
            if trace is not None:
                trace.append(key)
            if a == last:
                ng = g
                gk = ("goal",)
                if ng < best.get(gk, math.inf):
                    best[gk] = ng
                    parent[gk] = key
                    info[gk] = 0.0
                    counter += 1
                    heapq.heappush(frontier, (ng, -1, counter, gk))
                continue
            s_here = horizon.stride(a)
            rho = upv_collect(upvs[uid], self._visible_nodes(fcell, s_here), beta)
            k = horizon.taus[a + 1] - horizon.taus[a]
            rho = self.model.propagate(rho, k)
            hk = upv_key(rho)
            cid = upv_ids.get(hk)
            if cid is None:
                cid = len(upvs)
                upvs.append(rho)
                upv_ids[hk] = cid
            rho = upvs[cid]
            s_child = horizon.stride(a + 1)
            tau_c = horizon.taus[a + 1]
            masses = self.future_masses(rho, a + 1, horizon) if use_heuristic and a + 1 < last else None
            pm = self._point_mass(rho)
            for rep, h1 in self._children(fcell, khead, k, s_child):
                vis = self.tables.visible_points((rep[0] // s_child, rep[1] // s_child), s_child)
                c = 1.0 - gamma ** tau_c * float(pm[vis].sum())
                ng = g + c
                ck = ((rep[0] // s_child, rep[1] // s_child), h1, a + 1, cid)
                if ng < best.get(ck, math.inf):
                    hval = 0.0
                    if masses is not None:
                        hval = self.heuristic_terms(rep, h1, a + 1, masses, horizon)
                    best[ck] = ng
                    parent[ck] = key
                    info[ck] = hval
                    _reps[ck] = rep
                    counter += 1
                    heapq.heappush(frontier, (ng + hval, tau_c, counter, ck))
        if goal_key is None:
            return SearchResult([], math.inf, expansions, False, upvs)
        # rebuild
        chain = []
        node = parent[goal_key]
        while node is not None:
            chain.append(node)
            node = parent[node]
        chain.reverse()
        path = []
        for key in chain:
            kcell, khead, a, uid = key
            rep = _reps.get(key, kcell) if a > 0 else kcell
            path.append(PathNode(rep, khead, a, horizon.taus[a], uid, best[key], info[key]))
        return SearchResult(path, best[goal_key], expansions, True, upvs)

    # -- iterative deepening ----------------------------------------------------

    def iterative_deepening(self, cell, heading, belief, stop_on_zero: bool = True) -> "PlanResult":
        """Deepen the horizon one timestep at a time until the budget runs out.

        The first horizon always runs to completion; later ones are
        abandoned if the budget expires mid-search.  Searching stops early
        once the deepest path leaves no unobserved probability.
        """
        budget = Budget(self.params.time_budget, self.params.max_expansions)
        results: list[SearchResult] = []
        zero_stop = False
        for i in range(1, self.horizon.n):
            hz = self.horizon.prefix(i)
            budget.armed = i > 1
            try:
                res = self.astar(cell, heading, belief, hz, budget=budget)
            except BudgetExceeded:
                break
            if i == 1:
                budget.used += res.expansions
            results.append(res)
            term = res.terminal_upv()
            if stop_on_zero and res.complete and term is not None and is_zero(term):
                zero_stop = True
                break
        return PlanResult(results, zero_stop, time.perf_counter() - budget.start, budget.used)


@dataclass
class PlanResult:
    searches: list[SearchResult]
    zero_stop: bool
    wall_time: float
    expansions: int

    @property
    def deepest(self) -> SearchResult | None:
        done = [r for r in self.searches if r.complete]
        return done[-1] if done else None

    @property
    def depth(self) -> int:
        d = self.deepest
        return 0 if d is None else len(d.path) - 1

    def first_step(self):
        """(cell, heading) of the first waypoint after the root, or None."""
        d = self.deepest
        if d is None or len(d.path) < 2:
            return None
        n = d.path[1]
        return n.cell, n.heading


def fallback_step(reach, cell, heading, grid_shape, viable=None):
    """One-step primitive ending closest to the grid centre (used when no plan exists).

    Successors inside ``viable`` are preferred over all others.
    """
    nx, ny = grid_shape
    off = reach.offsets(heading, 1)
    fx, fy = cell[0] + off[:, 0], cell[1] + off[:, 1]
    d = (fx - (nx - 1) / 2) ** 2 + (fy - (ny - 1) / 2) ** 2
    if viable is not None:
        inside = (fx >= 0) & (fx < nx) & (fy >= 0) & (fy < ny)
        good = np.zeros_like(inside)
        good[inside] = viable[fx[inside], fy[inside], off[inside, 2]]
        d = d + np.where(good, 0.0, 1e12)
    k = int(np.lexsort((off[:, 2], fy, fx, d))[0])
    return (int(fx[k]), int(fy[k])), int(off[k, 2])
