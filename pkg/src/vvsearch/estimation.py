"""Imperfect sensing and the grid Bayesian filter over target states."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class DegenerateUpdateWarning(RuntimeWarning):
    """The measurement had zero probability under the prior; update skipped."""


@dataclass(frozen=True)
class SensorParams:
    p_d: float = 1.0
    mu: float = 0.0
    R: tuple = ((20.0, 0.0), (0.0, 20.0))
    l_max: float = 300.0

    def __post_init__(self):
        if not 0.0 <= self.p_d <= 1.0:
            raise ValueError("p_d must lie in [0, 1]")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2) or not np.allclose(R, R.T):
            raise ValueError("R must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(R) <= 0):
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "R", tuple(map(tuple, R.tolist())))
        if not self.l_max > 0:
            raise ValueError("l_max must be positive")

    @property
    def R_array(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)


# ---------------------------------------------------------------------------
# measurement model
# ---------------------------------------------------------------------------

def false_alarm_source_dist(visible_nodes: np.ndarray) -> np.ndarray:
    """Uniform distribution over the currently visible states (zeros if none)."""
    f = np.asarray(visible_nodes, dtype=float)
    total = f.sum()
    return f / total if total > 0 else np.zeros_like(f)


def eta(xi, node_xy: np.ndarray, R: np.ndarray, l_c: float) -> np.ndarray:
    """Probability that a measurement falls in the l_c x l_c cell around each state.

    Uses the Gaussian density at the cell centre times the cell area.
    """
    R = np.asarray(R, dtype=float)
    d = np.asarray(xi, dtype=float)[None, :] - node_xy
    Rinv = np.linalg.inv(R)
    q = np.einsum("ni,ij,nj->n", d, Rinv, d)
    norm = math.sqrt((2 * math.pi) ** 2 * np.linalg.det(R))
    return np.exp(-0.5 * q) / norm * l_c ** 2


def false_alarm_density(xi, visible_nodes, node_xy, R, l_c) -> float:
    """Probability that ``xi`` came from the false-alarm process."""
    gamma = false_alarm_source_dist(visible_nodes)
    if not gamma.any():
        return 0.0
    idx = np.nonzero(gamma)[0]
    return float(eta(xi, node_xy[idx], R, l_c) @ gamma[idx])


def likelihood(xi, visible_nodes: np.ndarray, node_xy: np.ndarray, params: SensorParams,
               l_c: float) -> np.ndarray:
    """L(xi | s) for every state s given the UAV's current visibility.

    ``xi`` is a 2-vector or None for a null measurement.
    """
    f = np.asarray(visible_nodes, dtype=float)
    if xi is None:
        return (1.0 - params.mu) * (1.0 - params.p_d * f)
    R = params.R_array
    true_part = params.p_d * f * eta(xi, node_xy, R, l_c) * (1.0 - params.mu)
    if params.mu == 0:
        return true_part
    return true_part + params.mu * false_alarm_density(xi, f, node_xy, R, l_c)


def sense(s_true: int, visible_nodes: np.ndarray, node_xy: np.ndarray, params: SensorParams,
          rng_detect: np.random.Generator, rng_false: np.random.Generator,
          rng_noise: np.random.Generator | None = None):
    """Draw one measurement: a noisy 2D position or None.

    Cases are checked in order: false alarm, true detection, missed
    detection, nothing in view.  A false alarm with no visible state
    produces None.
    """
    rng_noise = rng_noise if rng_noise is not None else rng_detect
    r_f = rng_false.random()
    r_d = rng_detect.random()
    if r_f <= params.mu:
        vis = np.nonzero(visible_nodes)[0]
        if len(vis) == 0:
            return None
        src = vis[rng_false.integers(len(vis))]
        return node_xy[src] + rng_noise.multivariate_normal(np.zeros(2), params.R_array)
    if visible_nodes[s_true] and r_d < params.p_d:
        return node_xy[s_true] + rng_noise.multivariate_normal(np.zeros(2), params.R_array)
    return None


# ---------------------------------------------------------------------------
# recursive Bayesian estimation
# ---------------------------------------------------------------------------

def rbe_predict(belief: np.ndarray, model, steps: int = 1) -> np.ndarray:
    if steps < 0:
        raise ValueError("steps must be >= 0")
    return model.propagate(belief, steps)


def rbe_update(belief: np.ndarray, lik: np.ndarray, return_flag: bool = False):
    """Posterior proportional to likelihood times prior.

    A zero normaliser leaves the prior unchanged and emits a
    DegenerateUpdateWarning.
    """
    post = lik * belief
    z = post.sum()
    ok = z > 0 and np.isfinite(z)
    if ok:
        post = post / z
    else:
        warnings.warn("measurement has zero likelihood under the prior; belief kept",
                      DegenerateUpdateWarning, stacklevel=2)
        post = np.array(belief, dtype=float, copy=True)
    return (post, ok) if return_flag else post


# ---------------------------------------------------------------------------
# belief spread
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeliefCovariance:
    sigma_n2: float
    sigma_v2: float

    @property
    def trace(self) -> float:
        return self.sigma_n2 + self.sigma_v2


def belief_covariance(belief: np.ndarray, node_point: np.ndarray, node_speed: np.ndarray,
                      dist: np.ndarray, dist_sq: np.ndarray | None = None) -> BeliefCovariance:
    """Pairwise along-road position spread and speed spread of a belief.

    sigma_n^2 = sum_ij p_i p_j d(i, j)^2 and sigma_v^2 = sum_ij p_i p_j (v_i - v_j)^2.
    """
    p = np.asarray(belief, dtype=float)
    mass = np.bincount(node_point, weights=p, minlength=dist.shape[0])
    nz = np.nonzero(mass)[0]
    if dist_sq is None:
        d2 = dist[np.ix_(nz, nz)] ** 2
    else:
        d2 = dist_sq[np.ix_(nz, nz)]
    m = mass[nz]
    sigma_n2 = float(m @ d2 @ m)
    total = p.sum()
    ev = p @ node_speed
    ev2 = p @ node_speed ** 2
    sigma_v2 = max(2.0 * (total * ev2 - ev * ev), 0.0)
    return BeliefCovariance(sigma_n2, sigma_v2)


def belief_snapshot_rows(belief, node_xy, node_speed, threshold: float = 0.0):
    """(node, x, y, speed, probability) rows for CSV export."""
    for i in np.nonzero(np.asarray(belief) > threshold)[0]:
        yield int(i), float(node_xy[i, 0]), float(node_xy[i, 1]), float(node_speed[i]), float(belief[i])
