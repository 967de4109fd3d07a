"""Dataclass configs shared across modules.

Everything here is a plain value object; modules take the config they need
instead of reaching for globals.  Physical units are meters / seconds unless
a field says otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

# The five preference dimensions, in wire/order convention used everywhere.
PREF_DIMS = ("h_inner", "h_height", "h_speed", "h_safety", "h_formation")


@dataclass(frozen=True)
class PreferenceRanges:
    """Physical range per preference dimension, used to map to [0, 1].

    The learning stack trains and reports errors in these normalized units;
    the formation index range is [0, n_prototypes - 1].
    """

    h_inner: tuple[float, float] = (0.5, 8.0)
    h_height: tuple[float, float] = (0.5, 6.0)
    h_speed: tuple[float, float] = (0.2, 5.0)
    h_safety: tuple[float, float] = (0.0, 4.0)
    h_formation: tuple[float, float] = (0.0, 4.0)

    def lo(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PREF_DIMS], dtype=float)

    def hi(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PREF_DIMS], dtype=float)

    def normalize(self, y: np.ndarray) -> np.ndarray:
        lo, hi = self.lo(), self.hi()
        return (np.asarray(y, dtype=float) - lo) / (hi - lo)

    def denormalize(self, t: np.ndarray) -> np.ndarray:
        lo, hi = self.lo(), self.hi()
        return lo + np.asarray(t, dtype=float) * (hi - lo)

    def clamp(self, y: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(y, dtype=float), self.lo(), self.hi())

    def to_dict(self) -> dict:
        return {n: list(getattr(self, n)) for n in PREF_DIMS}

    @staticmethod
    def from_dict(d: dict) -> "PreferenceRanges":
        return PreferenceRanges(**{n: tuple(d[n]) for n in PREF_DIMS})


@dataclass(frozen=True)
class FeatureConfig:
    """Environment feature extraction knobs.

    A fixed fan of 26 rays (all nonzero sign combinations of {-1,0,1}^3)
    probes clearance around the swarm centroid; densities are measured in a
    cube of half-width ``density_radius``.
    """

    max_range: float = 30.0
    density_radius: float = 10.0
    dim: int = 16  # fixed per run, recorded in checkpoints
    similarity_sigma: float = 18.0  # RBF width for env_similarity

    # divide each feature by its scale before it enters the GP kernel; each
    # scale is the spread over which that feature meaningfully varies, not
    # its maximum, so one kernel lengthscale suits every dimension
    def scale_vector(self) -> np.ndarray:
        s = np.ones(self.dim)
        # density, min_clear, mean_clear, height, width, length, speed, height
        s[:8] = [0.25, 5.0, 8.0, 8.0, 12.0, self.max_range, 5.0, 6.0]
        return s


@dataclass(frozen=True)
class GpConfig:
    n_latents: int = 5
    n_inducing: int = 32
    lr_main: float = 1e-2   # variational / kernel / mixing group
    lr_noise: float = 1e-3  # alpha, beta group
    n_steps: int = 2000
    batch_size: int = 64
    jitter: float = 1e-6
    max_jitter: float = 1e-2
    init_log_noise: float = 0.0  # alpha init; variance e^alpha in normalized units
    init_lengthscale: float = 0.4  # in x_scale units; adapted per dim in training
    noise_exponent_range: tuple[float, float] = (-24.0, 8.0)
    # decoupled weight decay on the input-dependent noise tilt; keeps the
    # noise net from absorbing structure the kernel should explain
    noise_decay: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class RegionConfig:
    init_radius: float = 0.1
    logdet_tol: float = 1e-3
    max_iters: int = 10
    containment_tol: float = 1e-7


@dataclass(frozen=True)
class FormationConfig:
    w_goal_spacing: float = 1.0   # w_1 on (s - h_inner)^2
    w_height: float = 0.5         # w_2 on the center-height term
    s_min: float = 0.2
    s_max: float = 20.0
    yaw_samples: int = 36
    slot_tol: float = 1e-7


@dataclass(frozen=True)
class MissionConfig:
    covariance_threshold: float = 0.05  # normalized-variance units
    dt: float = 0.05
    waypoint_reach_radius: float = 1.5
    max_ticks: int = 6000
    ticks_per_waypoint: int = 400
    query_budget: int = 20
    oracle: str = "synthetic"  # or "external"
    seed: int = 0
    n_robots: int = 5
    start: tuple[float, float, float] = (5.0, 5.0, 1.5)
    waypoint_stride: int = 6
    local_map_radius: float = 40.0
    model_update_steps: int = 200
    model_update_batch: int = 64
    query_timeout_s: float = 10.0
    region: RegionConfig = field(default_factory=RegionConfig)
    formation: FormationConfig = field(default_factory=FormationConfig)
    ranges: PreferenceRanges = field(default_factory=PreferenceRanges)
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def replace(self, **kw) -> "MissionConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return MissionConfig(**vals)
