"""Shortest Dubins paths (six word classes), vectorized over many queries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
_EPS = 1e-10  # slack for tangency cases that round to just-infeasible
WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")


def mod2pi(a):
    return np.mod(a, TWO_PI)


def _word_params(alpha, beta, d):
    """Normalized (t, p, q) for each word; NaN marks an infeasible word.

    Inputs are arrays of the same shape; output has shape (6, 3, ...).
    """
    sa, sb = np.sin(alpha), np.sin(beta)
    ca, cb = np.cos(alpha), np.cos(beta)
    cab = np.cos(alpha - beta)
    out = np.full((6, 3) + np.shape(alpha), np.nan)
    with np.errstate(invalid="ignore"):
        # LSL
        p2 = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
        tmp = np.arctan2(cb - ca, d + sa - sb)
        ok = p2 >= -_EPS
        out[0, 0] = np.where(ok, mod2pi(-alpha + tmp), np.nan)
        out[0, 1] = np.where(ok, np.sqrt(np.maximum(p2, 0)), np.nan)
        out[0, 2] = np.where(ok, mod2pi(beta - tmp), np.nan)
        # RSR
        p2 = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
        tmp = np.arctan2(ca - cb, d - sa + sb)
        ok = p2 >= -_EPS
        out[1, 0] = np.where(ok, mod2pi(alpha - tmp), np.nan)
        out[1, 1] = np.where(ok, np.sqrt(np.maximum(p2, 0)), np.nan)
        out[1, 2] = np.where(ok, mod2pi(-beta + tmp), np.nan)
        # LSR
        p2 = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
        ok = p2 >= -_EPS
        p = np.sqrt(np.maximum(p2, 0))
        tmp = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        out[2, 0] = np.where(ok, mod2pi(-alpha + tmp), np.nan)
        out[2, 1] = np.where(ok, p, np.nan)
        out[2, 2] = np.where(ok, mod2pi(-mod2pi(beta) + tmp), np.nan)
        # RSL
        p2 = d * d - 2 + 2 * cab - 2 * d * (sa + sb)
        ok = p2 >= -_EPS
        p = np.sqrt(np.maximum(p2, 0))
        tmp = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        out[3, 0] = np.where(ok, mod2pi(alpha - tmp), np.nan)
        out[3, 1] = np.where(ok, p, np.nan)
        out[3, 2] = np.where(ok, mod2pi(beta - tmp), np.nan)
        # RLR
        c = (6.0 - d * d + 2 * cab + 2 * d * (sa - sb)) / 8.0
        ok = np.abs(c) <= 1 + _EPS
        p = mod2pi(TWO_PI - np.arccos(np.clip(c, -1, 1)))
        t = mod2pi(alpha - np.arctan2(ca - cb, d - sa + sb) + p / 2.0)
        out[4, 0] = np.where(ok, t, np.nan)
        out[4, 1] = np.where(ok, p, np.nan)
        out[4, 2] = np.where(ok, mod2pi(alpha - beta - t + p), np.nan)
        # LRL
        c = (6.0 - d * d + 2 * cab + 2 * d * (-sa + sb)) / 8.0
        ok = np.abs(c) <= 1 + _EPS
        p = mod2pi(TWO_PI - np.arccos(np.clip(c, -1, 1)))
        t = mod2pi(-alpha - np.arctan2(ca - cb, d + sa - sb) + p / 2.0)
        out[5, 0] = np.where(ok, t, np.nan)
        out[5, 1] = np.where(ok, p, np.nan)
        out[5, 2] = np.where(ok, mod2pi(mod2pi(beta) - alpha - t + p), np.nan)
    # an arc of 2*pi minus round-off is really an arc of zero (straights are left alone)
    arcs = out.copy()
    arcs[:4, 1] = np.nan
    return np.where(arcs > TWO_PI - 1e-9, 0.0, out)


def _normalize(x0, y0, psi0, x1, y1, psi1, r):
    dx, dy = np.subtract(x1, x0), np.subtract(y1, y0)
    D = np.hypot(dx, dy)
    d = D / r
    theta = np.where(D > 0, np.arctan2(dy, dx), 0.0)
    return mod2pi(np.subtract(psi0, theta)), mod2pi(np.subtract(psi1, theta)), d


def dubins_lengths(q0, x1, y1, psi1, r) -> np.ndarray:
    """Shortest path length from q0 = (x, y, psi) to many end poses.

    ``x1, y1, psi1, r`` broadcast together.
    """
    x1, y1, psi1, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, y1, psi1, r)))
    alpha, beta, d = _normalize(q0[0], q0[1], q0[2], x1, y1, psi1, r)
    params = _word_params(alpha, beta, d)
    total = np.nansum(params, axis=1)
    total[np.isnan(params).any(axis=1)] = np.inf
    return total.min(axis=0) * r


@dataclass(frozen=True)
class DubinsPath:
    q0: tuple[float, float, float]
    r: float
    word: str
    params: tuple[float, float, float]  # normalized segment lengths

    @property
    def length(self) -> float:
        return float(sum(self.params) * self.r)

    def sample(self, s: float) -> tuple[float, float, float]:
        """Pose after travelling arc length ``s`` (clamped to the path)."""
        s = min(max(float(s), 0.0), self.length)
        x, y, psi = self.q0
        rem = s / self.r if self.r > 0 else 0.0
        for kind, seg in zip(self.word, self.params):
            step = min(rem, seg)
            if kind == "S":
                x += step * self.r * math.cos(psi)
                y += step * self.r * math.sin(psi)
            else:
                sgn = 1.0 if kind == "L" else -1.0
                npsi = psi + sgn * step
                x += sgn * self.r * (math.sin(npsi) - math.sin(psi))
                y += sgn * self.r * (-math.cos(npsi) + math.cos(psi))
                psi = npsi
            rem -= step
            if rem <= 0:
                break
        return x, y, float(mod2pi(psi))

    def end(self) -> tuple[float, float, float]:
        return self.sample(self.length)


def dubins_shortest_path(q0, q1, r: float) -> DubinsPath:
    if not r > 0:
        raise ValueError("turn radius must be positive")
    alpha, beta, d = _normalize(q0[0], q0[1], q0[2], q1[0], q1[1], q1[2], r)
    params = _word_params(np.atleast_1d(alpha), np.atleast_1d(beta), np.atleast_1d(d))[:, :, 0]
    totals = np.where(np.isnan(params).any(axis=1), np.inf, np.nansum(params, axis=1))
    k = int(np.argmin(totals))
    return DubinsPath(tuple(float(v) for v in q0), float(r), WORDS[k], tuple(float(v) for v in params[k]))


def dubins_shortest_length(q0, q1, r: float) -> float:
    return dubins_shortest_path(q0, q1, r).length
