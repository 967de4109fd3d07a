"""Largest obstacle-free convex region around a seed point.

Alternates two steps until the inscribed volume stalls: (1) one separating
hyperplane per reachable obstacle, tangent at the obstacle's closest point
in the current ellipsoid metric; (2) the maximum-volume inscribed ellipsoid
of the resulting polytope, found by determinant maximization under
second-order-cone constraints (solved with cvxpy/Clarabel).

Conventions: polytope P = {x : a_j . x <= b_j} with unit normals; obstacles
end up on the far side (a_j . v >= b_j for every obstacle vertex v).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from .configs import RegionConfig
from .geometry import as_vec3, box_vertices, quadratic_box_argmin
from .world import Obstacle, Scenario


class InfeasibleSeedError(ValueError):
    """Region seed lies inside an obstacle."""


class InfeasibleRegionError(ValueError):
    """Polytope has empty interior; no inscribed ellipsoid exists."""


@dataclass(frozen=True)
class Polytope:
    A: np.ndarray  # (m, 3), unit rows
    b: np.ndarray  # (m,)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(-1, 3)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        norms = np.linalg.norm(A, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            A = A / norms[:, None]
            b = b / norms
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all(pts @ self.A.T <= self.b[None, :] + tol, axis=1)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class Ellipsoid:
    C: np.ndarray  # (3, 3) symmetric positive definite
    d: np.ndarray  # (3,) center

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float).reshape(3, 3)
        C = 0.5 * (C + C.T)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", as_vec3(self.d))
        if np.linalg.eigvalsh(C).min() <= 0:
            raise ValueError("ellipsoid matrix must be positive definite")

    @property
    def logdet(self) -> float:
        sign, ld = np.linalg.slogdet(self.C)
        assert sign > 0
        return float(ld)

    def metric(self) -> np.ndarray:
        """Q with metric distance^2 = (x-d)^T Q (x-d); unit ball is the surface."""
        return np.linalg.inv(self.C @ self.C.T)

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist()}


@dataclass(frozen=True)
class DilatedPolytope:
    A: np.ndarray
    b: np.ndarray       # original offsets
    offsets: np.ndarray  # dilated offsets B <= b
    feasible: bool

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all(pts @ self.A.T <= self.offsets[None, :] + tol, axis=1)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(),
                "offsets": self.offsets.tolist(), "feasible": self.feasible}


def _bounds_planes(bounds: Obstacle) -> tuple[np.ndarray, np.ndarray]:
    A = np.vstack([np.eye(3), -np.eye(3)])
    b = np.concatenate([bounds.max_corner, -bounds.min_corner])
    return A, b


def separating_hyperplanes(obstacles: list[Obstacle], ellipsoid: Ellipsoid,
                           bounds: Obstacle) -> Polytope:
    """One tangent plane per obstacle not already excluded, plus bound faces.

    Planes are tangent to each obstacle at its closest point in the ellipsoid
    metric, oriented with the obstacle on the >= side and the ellipsoid
    center strictly on the <= side.
    """
    d = ellipsoid.d
    Q = ellipsoid.metric()
    for ob in obstacles:
        if ob.contains(d):
            raise InfeasibleSeedError(
                f"ellipsoid center {d.tolist()} inside obstacle {ob.to_dict()}"
            )
    # nearest (in the metric) obstacles first, so their planes can exclude the rest
    order = sorted(
        range(len(obstacles)),
        key=lambda i: float(
            (lambda x: (x - d) @ Q @ (x - d))(
                quadratic_box_argmin(Q, d, obstacles[i].min_corner, obstacles[i].max_corner)
            )
        ),
    )
    rows: list[np.ndarray] = []
    offs: list[float] = []
    for i in order:
        ob = obstacles[i]
        verts = box_vertices(ob.min_corner, ob.max_corner)
        excluded = False
        for a, b in zip(rows, offs):
            if np.all(verts @ a >= b - 1e-12):
                excluded = True
                break
        if excluded:
            continue
        x_star = quadratic_box_argmin(Q, d, ob.min_corner, ob.max_corner)
        g = Q @ (x_star - d)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            raise InfeasibleSeedError("ellipsoid center touches an obstacle")
        a = g / gn
        rows.append(a)
        offs.append(float(a @ x_star))
    Ab, bb = _bounds_planes(bounds)
    A = np.vstack(rows + [Ab]) if rows else Ab
    b = np.concatenate([np.asarray(offs), bb]) if offs else bb
    return Polytope(A, b)


def max_volume_ellipsoid(P: Polytope, tol: float = 1e-8) -> tuple[Ellipsoid, bool]:
    """Maximize logdet(C) s.t. ||C a_j|| + a_j . d <= b_j.

    Returns (ellipsoid, clean); clean is False when the solver stopped at an
    inaccurate but feasible iterate.  Raises InfeasibleRegionError when the
    polytope has no interior.
    """
    A, b = P.A, P.b
    C = cp.Variable((3, 3), PSD=True)
    d = cp.Variable(3)
    cons = [cp.norm(C @ A[j]) + A[j] @ d <= b[j] for j in range(P.n_rows)]
    prob = cp.Problem(cp.Maximize(cp.log_det(C)), cons)
    clean = True
    try:
        prob.solve(solver="CLARABEL")
    except cp.SolverError:
        prob.solve(solver="SCS")
    if prob.status in ("infeasible", "unbounded"):
        raise InfeasibleRegionError(f"ellipsoid program {prob.status}")
    if prob.status != "optimal":
        clean = False
    Cv = 0.5 * (C.value + C.value.T)
    dv = np.asarray(d.value).reshape(3)
    # exact containment repair: uniform shrink against the worst constraint
    margins = b - A @ dv
    if np.any(margins <= 0):
        raise InfeasibleRegionError("solver returned center outside the polytope")
    norms = np.linalg.norm(Cv @ A.T, axis=0)
    with np.errstate(divide="ignore"):
        gamma = np.min(np.where(norms > 0, margins / norms, np.inf))
    if gamma < 1.0:
        Cv = Cv * gamma
    w = np.linalg.eigvalsh(Cv)
    if w.min() <= 0:
        Cv = Cv + (abs(w.min()) + 1e-12) * np.eye(3)
    return Ellipsoid(Cv, dv), clean


@dataclass(frozen=True)
class RegionResult:
    polytope: Polytope
    ellipsoid: Ellipsoid
    logdet_history: tuple[float, ...]
    converged: bool
    clean: bool

    def to_dict(self) -> dict:
        return {
            "polytope": self.polytope.to_dict(),
            "ellipsoid": self.ellipsoid.to_dict(),
            "logdet_history": list(self.logdet_history),
            "converged": self.converged,
            "clean": self.clean,
        }


def inflate_region(scenario: Scenario, seed: np.ndarray,
                   cfg: RegionConfig = RegionConfig(),
                   obstacles: list[Obstacle] | None = None) -> RegionResult:
    """Alternate hyperplane generation and ellipsoid maximization from a seed.

    ``obstacles`` may restrict the obstacle set to a local window; defaults
    to the full scenario list.
    """
    seed = as_vec3(seed)
    obs = list(scenario.obstacles) if obstacles is None else list(obstacles)
    if not scenario.bounds.contains(seed):
        raise InfeasibleSeedError(f"seed {seed.tolist()} outside bounds")
    for ob in obs:
        if ob.contains(seed):
            raise InfeasibleSeedError(f"seed {seed.tolist()} inside obstacle {ob.to_dict()}")
    ell = Ellipsoid(cfg.init_radius * np.eye(3), seed)
    history: list[float] = []
    best: tuple[Polytope, Ellipsoid] | None = None
    converged = False
    clean = True
    prev = -math.inf
    for _ in range(cfg.max_iters):
        P = separating_hyperplanes(obs, ell, scenario.bounds)
        new_ell, step_clean = max_volume_ellipsoid(P)
        ld = new_ell.logdet
        if ld < prev - 1e-12:
            # numerically stalled; keep the best pair found so far
            converged = True
            break
        clean = clean and step_clean
        history.append(ld)
        best = (P, new_ell)
        if ld - prev < cfg.logdet_tol and len(history) > 1:
            converged = True
            break
        prev = ld
        ell = new_ell
    assert best is not None
    return RegionResult(
        polytope=best[0],
        ellipsoid=best[1],
        logdet_history=tuple(history),
        converged=converged,
        clean=clean,
    )


def dilate(P: Polytope, robot_edge: float, h_safety: float) -> DilatedPolytope:
    """Shrink each face by the robot cube's support along its normal plus the
    safety margin.  An empty result is flagged, not raised."""
    support = (robot_edge / 2.0) * np.abs(P.A).sum(axis=1)
    offsets = P.b - support - h_safety
    res = linprog(
        c=np.array([0.0, 0.0, 0.0, -1.0]),
        A_ub=np.hstack([P.A, np.ones((P.n_rows, 1))]),
        b_ub=offsets,
        bounds=[(None, None)] * 3 + [(None, None)],
        method="highs",
    )
    feasible = bool(res.status == 0 and res.x is not None and res.x[3] > 0)
    return DilatedPolytope(A=P.A.copy(), b=P.b.copy(), offsets=offsets, feasible=feasible)


def chebyshev_center(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Largest-inscribed-ball center of {x : Ax <= b}; None when empty."""
    m = A.shape[0]
    res = linprog(
        c=np.array([0.0, 0.0, 0.0, -1.0]),
        A_ub=np.hstack([A, np.linalg.norm(A, axis=1, keepdims=True)]),
        b_ub=b,
        bounds=[(None, None)] * 3 + [(0, None)],
        method="highs",
    )
    if res.status != 0 or res.x is None:
        return None
    return res.x[:3].copy(), float(res.x[3])
