"""Fit a formation prototype inside a convex free region.

The fit picks a yaw from a fixed sweep and, per yaw, solves a small strictly
convex QP over translation and scale: track the goal with the formation
centroid, keep the scale near the preferred spacing and the centroid near
the preferred height, and keep every slot inside the dilated polytope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog, minimize

from .configs import FormationConfig
from .geometry import as_vec3
from .prototypes import FormationPrototype
from .safe_region import DilatedPolytope

_EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class TransformParams:
    yaw: float
    translation: np.ndarray  # (3,)
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        R = yaw_matrix(self.yaw)
        return self.translation[None, :] + self.scale * points @ R.T


@dataclass(frozen=True)
class FitResult:
    prototype: str
    params: TransformParams
    positions: np.ndarray  # (n, 3) slot targets
    cost: float
    feasible: bool


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _qp_data(rot_pts: np.ndarray, r_goal: np.ndarray, h_inner: float,
             h_height: float, cfg: FormationConfig):
    """Quadratic pieces over u = (t, s) for one yaw; returns (P, q, G, h, const)."""
    c = rot_pts.mean(axis=0)
    M1 = np.hstack([np.eye(3), c[:, None]])          # u -> centroid position
    e4 = np.array([0.0, 0.0, 0.0, 1.0])
    m3 = np.array([0.0, 0.0, 1.0, c[2]])
    P = M1.T @ M1 + cfg.w_goal_spacing * np.outer(e4, e4) + cfg.w_height * np.outer(m3, m3)
    q = M1.T @ r_goal + cfg.w_goal_spacing * h_inner * e4 + cfg.w_height * h_height * m3
    const = float(r_goal @ r_goal + cfg.w_goal_spacing * h_inner ** 2
                  + cfg.w_height * h_height ** 2)
    return P, q, const


def _constraint_rows(rot_pts: np.ndarray, region: DilatedPolytope,
                     cfg: FormationConfig) -> tuple[np.ndarray, np.ndarray]:
    """a_j . t + s (a_j . R x_i) <= B_j for every face j and slot i, plus scale box."""
    A, B = region.A, region.offsets
    proj = rot_pts @ A.T                              # (n, m)
    n, m = proj.shape
    G = np.zeros((n * m + 2, 4))
    h = np.zeros(n * m + 2)
    G[: n * m, :3] = np.tile(A, (n, 1))
    G[: n * m, 3] = proj.T.reshape(-1, order="F")     # slot-major blocks
    h[: n * m] = np.tile(B, n)
    G[n * m] = [0.0, 0.0, 0.0, -1.0]
    h[n * m] = -cfg.s_min
    G[n * m + 1] = [0.0, 0.0, 0.0, 1.0]
    h[n * m + 1] = cfg.s_max
    return G, h


def _solve_yaw_qp(P: np.ndarray, q: np.ndarray, const: float, G: np.ndarray,
                  h: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Minimize u'Pu - 2q'u + const s.t. Gu <= h; None when infeasible."""
    u = np.linalg.solve(P, q)
    if np.all(G @ u <= h + 1e-10):
        cost = float(u @ P @ u - 2.0 * q @ u + const)
        return u, max(cost, 0.0)
    # feasible interior start via the Chebyshev LP, then SLSQP on the QP
    norms = np.linalg.norm(G, axis=1, keepdims=True)
    res = linprog(
        c=np.array([0.0, 0.0, 0.0, 0.0, -1.0]),
        A_ub=np.hstack([G, norms]),
        b_ub=h,
        bounds=[(None, None)] * 4 + [(0.0, None)],
        method="highs",
    )
    if res.status != 0 or res.x is None or res.x[4] <= 1e-12:
        return None
    u0 = res.x[:4]

    def fun(v):
        return float(v @ P @ v - 2.0 * q @ v + const)

    def jac(v):
        return 2.0 * (P @ v - q)

    out = minimize(
        fun, u0, jac=jac, method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda v: h - G @ v, "jac": lambda v: -G}],
        options={"maxiter": 200, "ftol": 1e-12},
    )
    u = out.x
    viol = float(np.max(G @ u - h))
    if viol > 1e-8:
        u = u0  # keep the strictly feasible point over a violating iterate
    return u, max(fun(u), 0.0)


def fit_formation(prototype: FormationPrototype, region: DilatedPolytope,
                  r_goal: np.ndarray, h_inner: float, h_height: float,
                  cfg: FormationConfig = FormationConfig()) -> FitResult | None:
    """Best placement over the yaw sweep; None when no yaw admits the slots."""
    r_goal = as_vec3(r_goal)
    pts = prototype.local_positions
    best: FitResult | None = None
    for k in range(cfg.yaw_samples):
        yaw = 2.0 * math.pi * k / cfg.yaw_samples
        rot = pts @ yaw_matrix(yaw).T
        P, q, const = _qp_data(rot, r_goal, h_inner, h_height, cfg)
        G, h = _constraint_rows(rot, region, cfg)
        sol = _solve_yaw_qp(P, q, const, G, h)
        if sol is None:
            continue
        u, cost = sol
        if best is None or cost < best.cost - 1e-12:
            params = TransformParams(yaw=yaw, translation=u[:3].copy(), scale=float(u[3]))
            positions = params.apply(pts)
            best = FitResult(prototype=prototype.name, params=params,
                             positions=positions, cost=cost, feasible=True)
    if best is not None:
        inside = region.contains(best.positions, tol=cfg.slot_tol)
        if not bool(np.all(inside)):
            return None
    return best


def fit_with_fallback(prototypes: list[FormationPrototype], preferred: int,
                      region: DilatedPolytope, r_goal: np.ndarray, h_inner: float,
                      h_height: float, cfg: FormationConfig = FormationConfig(),
                      ) -> tuple[FitResult | None, list[str]]:
    """Try the preferred prototype, then the rest in library order.

    Returns (result, names tried); result is None when nothing fits.
    """
    if not region.feasible:
        return None, []
    order = [preferred] + [i for i in range(len(prototypes)) if i != preferred]
    tried: list[str] = []
    for idx in order:
        proto = prototypes[idx]
        tried.append(proto.name)
        res = fit_formation(proto, region, r_goal, h_inner, h_height, cfg)
        if res is not None:
            return res, tried
    return None, tried


def assign_slots(current: np.ndarray, slots: np.ndarray) -> np.ndarray:
    """Permutation mapping robot row i to slot assign[i], minimizing total
    squared travel."""
    current = np.atleast_2d(current)
    slots = np.atleast_2d(slots)
    if current.shape != slots.shape:
        raise ValueError("robot and slot counts differ")
    cost = ((current[:, None, :] - slots[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(len(current), dtype=int)
    out[rows] = cols
    return out
