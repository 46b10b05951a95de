"""On-disk caches for visibility planes and one-step reachability."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .reachability import OneStep, VehicleLimits
from .visibility import VoxelGrid

MAGIC = b"VVC1"


class CacheError(ValueError):
    pass


def vv_key(env_digest: str, grid: VoxelGrid, l_max: float, h_uav: float, points: np.ndarray,
           corners: bool = False) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([env_digest, list(grid.origin), grid.l_v, grid.nx, grid.ny, grid.nz,
                         float(l_max), float(h_uav), bool(corners)]).encode())
    h.update(np.ascontiguousarray(points, dtype=float).tobytes())
    return h.hexdigest()[:20]


def save_vv(path, slices: np.ndarray, grid: VoxelGrid, header: dict) -> None:
    """Write a header (JSON) followed by one bit-packed plane per point."""
    meta = dict(header)
    meta.update({"origin": list(grid.origin), "l_v": grid.l_v, "nx": grid.nx, "ny": grid.ny,
                 "nz": grid.nz, "n_points": int(slices.shape[0])})
    blob = json.dumps(meta, sort_keys=True).encode()
    packed = np.packbits(slices.reshape(slices.shape[0], -1), axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(packed.tobytes())
    tmp.replace(path)


def load_vv(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CacheError(f"{path}: not a visibility cache file")
        (n,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(n))
        raw = np.frombuffer(fh.read(), dtype=np.uint8)
    P, nx, ny = meta["n_points"], meta["nx"], meta["ny"]
    row = (nx * ny + 7) // 8
    if raw.size != P * row:
        raise CacheError(f"{path}: truncated payload")
    bits = np.unpackbits(raw.reshape(P, row), axis=1, count=nx * ny).astype(bool)
    return bits.reshape(P, nx, ny), meta


def reach_key(limits: VehicleLimits, l_v: float, n_headings: int, n_speed_samples: int) -> str:
    blob = json.dumps([limits.v_min, limits.v_max, limits.turn_rate, limits.dt,
                       float(l_v), int(n_headings), int(n_speed_samples)]).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def save_reach(path, one: OneStep) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lim = one.limits
    with open(path, "wb") as fh:
        np.savez(fh, limits=np.array([lim.v_min, lim.v_max, lim.turn_rate, lim.dt]),
                 meta=np.array([one.l_v, one.n_headings, one.w]),
                 **{f"h{i}": p for i, p in enumerate(one.prims)})


def load_reach(path) -> OneStep:
    with np.load(path) as z:
        lim = VehicleLimits(*z["limits"].tolist())
        l_v, n_h, w = z["meta"].tolist()
        prims = [z[f"h{i}"] for i in range(int(n_h))]
    return OneStep(lim, float(l_v), int(n_h), int(w), prims)
