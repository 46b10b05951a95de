"""Procedural urban maps from road tiles.

Tiles are sampled row by row so that every shared border agrees on whether
a road crosses it; contradictions are resolved by backtracking.  Maps whose
road tiles do not form a single connected network are thrown away and
resampled.  Buildings are dropped into the square blocks enclosed by four
neighbouring tile centres, which keeps them clear of the road centrelines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Environment, Obstacle, RoadNetwork

# side bits
N, E, S, W = 1, 2, 4, 8
SIDES = (N, E, S, W)
OPPOSITE = {N: S, E: W, S: N, W: E}

KINDS = ("straight", "turn", "fork", "four_way", "empty")

# every orientation of every tile kind, as a bitmask of connected sides
TILE_VARIANTS: dict[str, tuple[int, ...]] = {
    "straight": (N | S, E | W),
    "turn": (N | E, E | S, S | W, W | N),
    "fork": (N | E | S, E | S | W, S | W | N, W | N | E),
    "four_way": (N | E | S | W,),
    "empty": (0,),
}

DENSITY_PRESETS = {
    "sparse": ({"straight": 0.17, "turn": 0.17, "fork": 0.087, "four_way": 0.043, "empty": 0.52}, 0.3),
    "medium": ({"straight": 0.21, "turn": 0.21, "fork": 0.21, "four_way": 0.16, "empty": 0.21}, 0.5),
    "dense": ({"straight": 0.13, "turn": 0.10, "fork": 0.21, "four_way": 0.52, "empty": 0.042}, 0.7),
}


class GenerationError(RuntimeError):
    """The generator could not produce a connected map within the retry cap."""


@dataclass(frozen=True)
class TileMap:
    masks: np.ndarray  # (rows, cols) side bitmasks; row 0 is the southern edge
    tile_side: float = 150.0

    @property
    def shape(self):
        return self.masks.shape

    def kind(self, r: int, c: int) -> str:
        m = int(self.masks[r, c])
        for k, variants in TILE_VARIANTS.items():
            if m in variants:
                return k
        raise ValueError(f"unknown tile mask {m}")

    def borders_consistent(self) -> bool:
        rows, cols = self.masks.shape
        for r in range(rows):
            for c in range(cols):
                m = int(self.masks[r, c])
                if c + 1 < cols and bool(m & E) != bool(self.masks[r, c + 1] & W):
                    return False
                if r + 1 < rows and bool(m & N) != bool(self.masks[r + 1, c] & S):
                    return False
        return True

    def is_connected(self) -> bool:
        """Union-find over road tiles joined through shared road borders."""
        rows, cols = self.masks.shape
        parent = {}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for r in range(rows):
            for c in range(cols):
                if self.masks[r, c]:
                    parent[(r, c)] = (r, c)
        if not parent:
            return False
        for (r, c) in list(parent):
            m = int(self.masks[r, c])
            if m & E and c + 1 < cols:
                parent[find((r, c))] = find((r, c + 1))
            if m & N and r + 1 < rows:
                parent[find((r, c))] = find((r + 1, c))
        return len({find(k) for k in parent}) == 1


def validate_weights(weights: dict) -> dict:
    unknown = set(weights) - set(KINDS)
    if unknown:
        raise ValueError(f"unknown tile kinds: {sorted(unknown)}")
    w = {k: float(weights.get(k, 0.0)) for k in KINDS}
    if any(v < 0 for v in w.values()):
        raise ValueError("tile weights must be non-negative")
    total = sum(w.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"tile weights must sum to 1, got {total!r}")
    return w


def _variant_table(weights: dict) -> tuple[np.ndarray, np.ndarray]:
    masks, probs = [], []
    for kind in KINDS:
        variants = TILE_VARIANTS[kind]
        for m in variants:
            masks.append(m)
            probs.append(weights[kind] / len(variants))
    return np.array(masks), np.array(probs)


def sample_tiles(rows: int, cols: int, weights: dict, rng: np.random.Generator) -> np.ndarray | None:
    """Row-major constrained sampling with backtracking.

    Returns the mask grid, or None when no assignment satisfies the border
    constraints under the given weights.  Map borders are unconstrained.
    """
    masks, probs = _variant_table(weights)
    grid = np.zeros((rows, cols), dtype=np.int64)
    n = rows * cols
    options: list[list[int] | None] = [None] * n
    i = 0
    while 0 <= i < n:
        r, c = divmod(i, cols)
        if options[i] is None:
            ok = np.ones(len(masks), dtype=bool)
            if c > 0:
                ok &= ((masks & W) > 0) == bool(grid[r, c - 1] & E)
            if r > 0:
                ok &= ((masks & S) > 0) == bool(grid[r - 1, c] & N)
            ok &= probs > 0
            idx = np.nonzero(ok)[0]
            if len(idx):
                p = probs[idx] / probs[idx].sum()
                order = rng.choice(idx, size=len(idx), replace=False, p=p)
                options[i] = [int(masks[k]) for k in order]
            else:
                options[i] = []
        if options[i]:
            grid[r, c] = options[i].pop(0)
            i += 1
        else:
            options[i] = None
            i -= 1
    return grid if i == n else None


def road_network_from_tiles(tmap: TileMap, origin: tuple[float, float]) -> RoadNetwork:
    """Road graph through tile centres and shared side midpoints.

    Straight-through degree-2 nodes are contracted so that every remaining
    node is a junction, corner or dead end.
    """
    rows, cols = tmap.shape
    side = tmap.tile_side
    x0, y0 = origin
    # node keys in half-tile units
    adj: dict[tuple[int, int], set] = {}
    offsets = {N: (0, 1), E: (1, 0), S: (0, -1), W: (-1, 0)}
    for r in range(rows):
        for c in range(cols):
            m = int(tmap.masks[r, c])
            if not m:
                continue
            ctr = (2 * c + 1, 2 * r + 1)
            for s in SIDES:
                if m & s:
                    dx, dy = offsets[s]
                    mid = (ctr[0] + dx, ctr[1] + dy)
                    adj.setdefault(ctr, set()).add(mid)
                    adj.setdefault(mid, set()).add(ctr)
    # contract collinear pass-through nodes
    changed = True
    while changed:
        changed = False
        for key in sorted(adj):
            nb = adj.get(key, ())
            if len(nb) != 2:
                continue
            a, b = sorted(nb)
            if (a[0] - key[0]) * (b[1] - key[1]) - (a[1] - key[1]) * (b[0] - key[0]) != 0:
                continue
            adj[a].discard(key)
            adj[b].discard(key)
            adj[a].add(b)
            adj[b].add(a)
            del adj[key]
            changed = True
    keys = sorted(adj)
    index = {k: i for i, k in enumerate(keys)}
    nodes = tuple((x0 + k[0] * side / 2, y0 + k[1] * side / 2) for k in keys)
    edges = sorted({tuple(sorted((index[a], index[b]))) for a in keys for b in adj[a]})
    return RoadNetwork(nodes, tuple(edges))


def place_buildings(rows, cols, side, origin, density, rng, clearance=15.0,
                    size_range=(60.0, 120.0), height_range=(10.0, 50.0)) -> list[Obstacle]:
    """At most one building per block bounded by four adjacent tile centres."""
    x0, y0 = origin
    out = []
    lo, hi = size_range
    for r in range(rows - 1):
        for c in range(cols - 1):
            if rng.random() >= density:
                continue
            bx = x0 + (c + 0.5) * side
            by = y0 + (r + 0.5) * side
            room = side - 2 * clearance
            sx = rng.uniform(lo, min(hi, room))
            sy = rng.uniform(lo, min(hi, room))
            ox = bx + clearance + rng.uniform(0.0, room - sx)
            oy = by + clearance + rng.uniform(0.0, room - sy)
            h = rng.uniform(*height_range)
            out.append(Obstacle.box(ox, oy, ox + sx, oy + sy, h))
    return out


def generate_tilemap(weights: dict, grid_dims=(6, 6), rng=None, max_retries: int = 100,
                     tile_side: float = 150.0) -> TileMap:
    weights = validate_weights(weights)
    rng = rng if rng is not None else np.random.default_rng()
    rows, cols = grid_dims
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    for _ in range(max_retries):
        masks = sample_tiles(rows, cols, weights, rng)
        if masks is None:
            continue
        tmap = TileMap(masks, tile_side)
        if tmap.is_connected():
            return tmap
    raise GenerationError(f"no connected road network after {max_retries} attempts")


def generate_environment(weights: dict, building_density: float, grid_dims=(6, 6),
                         rng_seed: int = 0, max_retries: int = 100, tile_side: float = 150.0,
                         h_feasible: float = 120.0) -> Environment:
    """Sample a connected tile map and furnish it with buildings."""
    if not 0.0 <= building_density <= 1.0:
        raise ValueError("building_density must lie in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    tmap = generate_tilemap(weights, grid_dims, rng, max_retries, tile_side)
    rows, cols = tmap.shape
    origin = (-cols * tile_side / 2, -rows * tile_side / 2)
    road = road_network_from_tiles(tmap, origin)
    buildings = place_buildings(rows, cols, tile_side, origin, building_density, rng)
    bounds = (origin[0], -origin[0], origin[1], -origin[1])
    return Environment(tuple(buildings), bounds, road, h_feasible, tile_side)


def normalized(weights: dict) -> dict:
    total = sum(weights.values())
    return {k: v / total for k, v in weights.items()}


def generate_preset(density: str, seed: int, grid_dims=(6, 6), **kw) -> Environment:
    """Generate from a named density preset.

    The tabulated preset weights are rounded and do not all sum to exactly
    one, so they are renormalized here.
    """
    raw, p = DENSITY_PRESETS[density]
    weights = normalized(raw)
    return generate_environment(weights, p, grid_dims, seed, **kw)


def tile_counts(tmap: TileMap) -> dict[str, int]:
    counts = dict.fromkeys(KINDS, 0)
    for r in range(tmap.shape[0]):
        for c in range(tmap.shape[1]):
            counts[tmap.kind(r, c)] += 1
    return counts

