"""Scenario representation: obstacles, occupancy grid, regions, features.

Scenario files are JSON with keys ``bounds``, ``obstacles``, ``regions``,
``goal``, ``grid_resolution``, ``robot_edge`` (see fixtures/eight_env.json).
All geometry is meters, world frame, z-up.  Scenarios are immutable after
load; every operation here is a pure function of its inputs.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configs import FeatureConfig
from .geometry import (
    as_vec3,
    box_contains,
    box_distance,
    boxes_overlap,
    ray_box_exit,
    ray_box_intersection,
    vec3,
)

# The eight environment types regions may be labeled with.
ENV_TYPES = (
    "open_space",
    "park",
    "river",
    "county",
    "bridge",
    "street",
    "city",
    "forest",
)


class ScenarioError(ValueError):
    """Scenario file failed to parse or violates an invariant."""


@dataclass(frozen=True)
class Obstacle:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", as_vec3(self.min_corner))
        object.__setattr__(self, "max_corner", as_vec3(self.max_corner))
        if not np.all(self.min_corner < self.max_corner):
            raise ScenarioError(
                f"degenerate box: min {self.min_corner.tolist()} !< max {self.max_corner.tolist()}"
            )

    def dilated(self, margin: float) -> "Obstacle":
        return Obstacle(self.min_corner - margin, self.max_corner + margin)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    def contains(self, p: np.ndarray, margin: float = 0.0) -> bool:
        return box_contains(p, self.min_corner, self.max_corner, margin)

    def distance(self, p: np.ndarray) -> float:
        return box_distance(p, self.min_corner, self.max_corner)

    def to_dict(self) -> dict:
        return {"min": self.min_corner.tolist(), "max": self.max_corner.tolist()}


@dataclass(frozen=True)
class Region:
    label: str
    box: Obstacle


@dataclass(frozen=True)
class Scenario:
    bounds: Obstacle
    obstacles: tuple[Obstacle, ...]
    regions: tuple[Region, ...]
    goal: np.ndarray
    grid_resolution: float
    robot_edge: float

    def __post_init__(self):
        object.__setattr__(self, "goal", as_vec3(self.goal))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.grid_resolution <= 0:
            raise ScenarioError("grid_resolution must be > 0")
        if self.robot_edge < 0:
            raise ScenarioError("robot_edge must be >= 0")
        if not self.bounds.contains(self.goal):
            raise ScenarioError(f"goal {self.goal.tolist()} outside bounds")
        half = self.robot_edge / 2.0
        for ob in self.obstacles:
            if not (self.bounds.contains(ob.min_corner) and self.bounds.contains(ob.max_corner)):
                raise ScenarioError(f"obstacle {ob.to_dict()} not inside bounds")
            if ob.contains(self.goal, margin=half):
                raise ScenarioError("goal lies inside an obstacle (robot-dilated)")
        for rg in self.regions:
            if rg.label not in ENV_TYPES:
                raise ScenarioError(f"unknown region label {rg.label!r}; expected one of {ENV_TYPES}")

    def region_at(self, p: np.ndarray) -> Region | None:
        for rg in self.regions:
            if rg.box.contains(p):
                return rg
        return None

    def free_at(self, p: np.ndarray, margin: float = 0.0) -> bool:
        if not self.bounds.contains(p):
            return False
        return not any(ob.contains(p, margin=margin) for ob in self.obstacles)

    def min_obstacle_distance(self, p: np.ndarray) -> float:
        if not self.obstacles:
            return math.inf
        return min(ob.distance(p) for ob in self.obstacles)

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds.to_dict(),
            "obstacles": [ob.to_dict() for ob in self.obstacles],
            "regions": [{"label": r.label, "box": r.box.to_dict()} for r in self.regions],
            "goal": self.goal.tolist(),
            "grid_resolution": self.grid_resolution,
            "robot_edge": self.robot_edge,
        }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        bounds = Obstacle(d["bounds"]["min"], d["bounds"]["max"])
        obstacles = tuple(Obstacle(o["min"], o["max"]) for o in d.get("obstacles", []))
        regions = tuple(
            Region(r["label"], Obstacle(r["box"]["min"], r["box"]["max"]))
            for r in d.get("regions", [])
        )
        return Scenario(
            bounds=bounds,
            obstacles=obstacles,
            regions=regions,
            goal=as_vec3(d["goal"]),
            grid_resolution=float(d["grid_resolution"]),
            robot_edge=float(d.get("robot_edge", 0.0)),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario document: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {p} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


@dataclass(frozen=True)
class OccupancyGrid:
    origin: np.ndarray          # world position of cell (0,0,0) min corner
    dims: tuple[int, int, int]
    resolution: float
    occupied: np.ndarray        # bool, shape dims

    def cell_center(self, cell: tuple[int, int, int]) -> np.ndarray:
        return self.origin + (np.asarray(cell, dtype=float) + 0.5) * self.resolution

    def point_to_cell(self, p: np.ndarray) -> tuple[int, int, int]:
        idx = np.floor((p - self.origin) / self.resolution).astype(int)
        idx = np.minimum(np.maximum(idx, 0), np.asarray(self.dims) - 1)
        return (int(idx[0]), int(idx[1]), int(idx[2]))

    def in_grid(self, cell: tuple[int, int, int]) -> bool:
        return all(0 <= cell[k] < self.dims[k] for k in range(3))

    def is_free(self, cell: tuple[int, int, int]) -> bool:
        return self.in_grid(cell) and not self.occupied[cell]


def rasterize(s: Scenario, window: Obstacle | None = None) -> OccupancyGrid:
    """Discretize the workspace; a cell is occupied iff it has positive-volume
    overlap with any obstacle dilated by robot_edge/2.

    ``window`` restricts the grid to a sub-box of the bounds (local maps).
    """
    box = window if window is not None else s.bounds
    lo = np.maximum(box.min_corner, s.bounds.min_corner)
    hi = np.minimum(box.max_corner, s.bounds.max_corner)
    res = s.grid_resolution
    dims = tuple(int(math.ceil((hi[k] - lo[k]) / res - 1e-9)) for k in range(3))
    if any(d < 2 for d in dims):
        raise ScenarioError(
            f"grid_resolution {res} too coarse for window size {(hi - lo).tolist()}: dims {dims}"
        )
    occ = np.zeros(dims, dtype=bool)
    half = s.robot_edge / 2.0
    for ob in s.obstacles:
        dlo = ob.min_corner - half
        dhi = ob.max_corner + half
        # index range of cells with positive-volume overlap
        i0 = np.floor((dlo - lo) / res + 1e-12).astype(int)
        i1 = np.ceil((dhi - lo) / res - 1e-12).astype(int)
        i0 = np.maximum(i0, 0)
        i1 = np.minimum(i1, np.asarray(dims))
        if np.any(i0 >= i1):
            continue
        occ[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]] = True
    return OccupancyGrid(origin=lo.copy(), dims=dims, resolution=res, occupied=occ)


def ray_clearance(s: Scenario, origin: np.ndarray, direction: np.ndarray,
                  max_range: float) -> float:
    """Distance to the first robot-dilated obstacle or bounds exit along a ray,
    clamped to max_range.  Purely geometric, no grid."""
    d = as_vec3(direction)
    n = np.linalg.norm(d)
    if n == 0:
        raise ValueError("ray direction must be nonzero")
    d = d / n
    o = as_vec3(origin)
    half = s.robot_edge / 2.0
    best = ray_box_exit(o, d, s.bounds.min_corner, s.bounds.max_corner)
    for ob in s.obstacles:
        t = ray_box_intersection(o, d, ob.min_corner - half, ob.max_corner + half)
        if t is not None and t < best:
            best = t
    return float(min(best, max_range))


# 26 directions: all sign combinations of {-1,0,1}^3 minus the zero vector.
RAY_FAN = np.array(
    [v for v in itertools.product((-1.0, 0.0, 1.0), repeat=3) if any(v)], dtype=float
)
RAY_FAN = RAY_FAN / np.linalg.norm(RAY_FAN, axis=1, keepdims=True)

# feature slot names for the first 8 entries; the rest are reserved zeros
FEATURE_NAMES = (
    "obstacle_density",
    "min_ray_clearance",
    "mean_ray_clearance",
    "free_height",
    "free_width",
    "free_length",
    "robot_mean_speed",
    "robot_mean_height",
)


@dataclass(frozen=True)
class SwarmSummary:
    mean_speed: float = 0.0
    mean_height: float = 0.0


def _density_in_cube(s: Scenario, center: np.ndarray, half_width: float) -> float:
    """Obstacle volume fraction inside the axis-aligned probe cube."""
    lo = center - half_width
    hi = center + half_width
    cube_vol = (2.0 * half_width) ** 3
    total = 0.0
    for ob in s.obstacles:
        ilo = np.maximum(lo, ob.min_corner)
        ihi = np.minimum(hi, ob.max_corner)
        if np.all(ilo < ihi):
            total += float(np.prod(ihi - ilo))
    return min(total / cube_vol, 1.0)


def extract_features(s: Scenario, swarm_centroid: np.ndarray,
                     summary: SwarmSummary = SwarmSummary(),
                     cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Deterministic environment feature vector at the swarm centroid.

    Layout: [density, min/mean ray clearance, free height/width/length,
    swarm mean speed, swarm mean height, zeros...] with dimension cfg.dim.
    """
    c = as_vec3(swarm_centroid)
    if not s.bounds.contains(c):
        raise ValueError(f"centroid {c.tolist()} outside scenario bounds")
    clear = np.array([ray_clearance(s, c, d, cfg.max_range) for d in RAY_FAN])
    up = ray_clearance(s, c, vec3(0, 0, 1), cfg.max_range)
    down = ray_clearance(s, c, vec3(0, 0, -1), cfg.max_range)
    left = ray_clearance(s, c, vec3(0, 1, 0), cfg.max_range)
    right = ray_clearance(s, c, vec3(0, -1, 0), cfg.max_range)
    fwd = ray_clearance(s, c, vec3(1, 0, 0), cfg.max_range)
    back = ray_clearance(s, c, vec3(-1, 0, 0), cfg.max_range)
    f = np.zeros(cfg.dim)
    f[0] = _density_in_cube(s, c, cfg.density_radius)
    f[1] = clear.min()
    f[2] = clear.mean()
    f[3] = min(up + down, cfg.max_range)
    f[4] = min(left + right, cfg.max_range)
    f[5] = min(fwd + back, cfg.max_range)
    f[6] = summary.mean_speed
    f[7] = summary.mean_height
    return f


def env_similarity(a: np.ndarray, b: np.ndarray, sigma: float | None = None) -> float:
    """RBF similarity exp(-||a-b||^2 / sigma^2) in (0, 1]; 1 iff a == b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"feature dimension mismatch: {a.shape} vs {b.shape}")
    if sigma is None:
        sigma = FeatureConfig().similarity_sigma
    d2 = float(np.sum((a - b) ** 2))
    return float(math.exp(-d2 / (sigma * sigma)))
