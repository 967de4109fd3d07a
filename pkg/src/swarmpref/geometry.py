"""Axis-aligned box geometry shared by the world, safety, and region code.

Points are numpy arrays of shape (3,), world frame, z-up, meters.
"""
from __future__ import annotations

import numpy as np


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector: {v!r}")
    return a


def box_closest_point(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Closest point of the box [lo, hi] to p (p itself when inside)."""
    return np.minimum(np.maximum(p, lo), hi)


def box_distance(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Euclidean distance from p to the box; 0 when p is inside."""
    return float(np.linalg.norm(p - box_closest_point(p, lo, hi)))


def box_contains(p: np.ndarray, lo: np.ndarray, hi: np.ndarray, margin: float = 0.0) -> bool:
    return bool(np.all(p >= lo - margin) and np.all(p <= hi + margin))


def box_vertices(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """All 8 corners, shape (8, 3)."""
    xs = [lo[0], hi[0]]
    ys = [lo[1], hi[1]]
    zs = [lo[2], hi[2]]
    return np.array([[x, y, z] for x in xs for y in ys for z in zs], dtype=float)


def ray_box_intersection(origin: np.ndarray, direction: np.ndarray,
                         lo: np.ndarray, hi: np.ndarray) -> float | None:
    """Slab test: distance t >= 0 to the first hit of the ray with the box.

    ``direction`` must be unit length for t to be metric distance.  Returns
    None when the ray misses.  A ray starting inside returns 0.0.
    """
    t0, t1 = 0.0, np.inf
    for k in range(3):
        d = direction[k]
        if abs(d) < 1e-300:
            if origin[k] < lo[k] or origin[k] > hi[k]:
                return None
            continue
        ta = (lo[k] - origin[k]) / d
        tb = (hi[k] - origin[k]) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return t0


def ray_box_exit(origin: np.ndarray, direction: np.ndarray,
                 lo: np.ndarray, hi: np.ndarray) -> float:
    """Distance to where a ray starting inside [lo, hi] leaves the box."""
    t1 = np.inf
    for k in range(3):
        d = direction[k]
        if abs(d) < 1e-300:
            continue
        ta = (lo[k] - origin[k]) / d
        tb = (hi[k] - origin[k]) / d
        t1 = min(t1, max(ta, tb))
    return float(t1)


def boxes_overlap(alo: np.ndarray, ahi: np.ndarray,
                  blo: np.ndarray, bhi: np.ndarray) -> bool:
    """Positive-volume overlap (shared faces do not count)."""
    return bool(np.all(np.maximum(alo, blo) < np.minimum(ahi, bhi)))


def quadratic_box_argmin(Q: np.ndarray, center: np.ndarray,
                         lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact argmin of (x-center)^T Q (x-center) over the box [lo, hi].

    Q must be symmetric positive definite.  Enumerates the 27 face/edge/corner
    active sets of the 3-D box; the true minimizer's free coordinates solve
    one of the reduced linear systems, so taking the best feasible candidate
    is exact.
    """
    best = None
    best_val = np.inf
    for code in range(27):
        state = (code % 3, (code // 3) % 3, code // 9)  # 0=lo, 1=hi, 2=free
        x = np.empty(3)
        free = [k for k in range(3) if state[k] == 2]
        for k in range(3):
            if state[k] == 0:
                x[k] = lo[k]
            elif state[k] == 1:
                x[k] = hi[k]
        if free:
            clamped = [k for k in range(3) if state[k] != 2]
            Qff = Q[np.ix_(free, free)]
            rhs = -Q[np.ix_(free, clamped)] @ (x[clamped] - center[clamped]) if clamped else np.zeros(len(free))
            x[free] = center[free] + np.linalg.solve(Qff, rhs)
            if np.any(x[free] < lo[free] - 1e-12) or np.any(x[free] > hi[free] + 1e-12):
                continue
            x[free] = np.clip(x[free], lo[free], hi[free])
        diff = x - center
        val = float(diff @ Q @ diff)
        if val < best_val - 1e-15:
            best_val = val
            best = x.copy()
    assert best is not None
    return best
