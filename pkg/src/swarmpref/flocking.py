"""Preference-parameterized flocking controller.

Seven velocity terms (goal seeking, formation, repulsion, attraction,
obstacle safety, height keeping, alignment) superposed with fixed weights
and capped at the preferred speed.  All functions are pure; `tick` maps an
immutable snapshot of robot states to a new one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import as_vec3, box_closest_point
from .world import Scenario


class CoincidentRobotsError(ValueError):
    """Two robots share a position; pairwise terms are undefined."""


@dataclass(frozen=True)
class PreferenceVector:
    """The five human-tunable behavior parameters."""

    h_inner: float
    h_height: float
    h_speed: float
    h_safety: float
    h_formation: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite preference vector: {vals}")
        if self.h_inner <= 0 or self.h_height <= 0 or self.h_speed <= 0:
            raise ValueError("h_inner, h_height, h_speed must be positive")
        if self.h_safety < 0:
            raise ValueError("h_safety must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.h_inner, self.h_height, self.h_speed, self.h_safety, self.h_formation]
        )

    def formation_index(self, n_prototypes: int) -> int:
        return int(np.clip(round(self.h_formation), 0, n_prototypes - 1))

    @staticmethod
    def from_array(a) -> "PreferenceVector":
        a = np.asarray(a, dtype=float).reshape(5)
        return PreferenceVector(*a.tolist())


@dataclass(frozen=True)
class RobotState:
    id: int
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "velocity", as_vec3(self.velocity))


@dataclass(frozen=True)
class FlockingWeights:
    w_flock: float = 0.3
    w_fmt: float = 0.35
    w_rep: float = 0.35
    w_att: float = 0.35
    w_saf: float = 0.4
    w_hei: float = 0.2
    w_ali: float = 0.1
    alignment_gain: tuple[float, float, float] = (2.0, 2.0, 1.0)


def v_flock(r_goal: np.ndarray, r_i: np.ndarray, h_speed: float) -> np.ndarray:
    """Goal-direction term: unit direction at full speed beyond 0.2 m, a
    softened spring inside (denominator floored at 0.4 so r_goal == r_i is 0)."""
    diff = as_vec3(r_goal) - as_vec3(r_i)
    dist = float(np.linalg.norm(diff))
    if dist > 0.2:
        return diff / dist * h_speed
    return diff / (dist + 0.4) * h_speed


def v_rep(r_i: np.ndarray, r_j: np.ndarray, h_inner: float) -> np.ndarray:
    """Half-spring repulsion, active at separations <= h_inner."""
    diff = as_vec3(r_i) - as_vec3(r_j)
    r_ij = float(np.linalg.norm(diff))
    if r_ij == 0.0:
        raise CoincidentRobotsError("v_rep undefined for coincident robots")
    if r_ij <= h_inner:
        return (h_inner - r_ij) * diff / r_ij
    return np.zeros(3)


def v_att(r_i: np.ndarray, r_j: np.ndarray, h_inner: float) -> np.ndarray:
    """Half-spring attraction beyond h_inner + 0.1; dead zone below that."""
    diff = as_vec3(r_j) - as_vec3(r_i)
    r_ij = float(np.linalg.norm(diff))
    if r_ij == 0.0:
        raise CoincidentRobotsError("v_att undefined for coincident robots")
    if r_ij >= h_inner + 0.1:
        return (r_ij - h_inner) * diff / r_ij
    return np.zeros(3)


def v_saf(d_ij: float, away_dir: np.ndarray, h_safety: float, h_speed: float) -> np.ndarray:
    """Constant-speed escape term, active while d_ij <= h_safety (inclusive)."""
    if d_ij < 0:
        raise ValueError("obstacle distance must be >= 0")
    if d_ij <= h_safety:
        return h_speed * as_vec3(away_dir)
    return np.zeros(3)


def v_hei(r_i_height: float, h_height: float, h_speed: float) -> np.ndarray:
    """Height keeping: constant-speed toward the preferred altitude when more
    than 0.2 m off, softened spring inside (sign corrected to approach)."""
    dis = abs(r_i_height - h_height)
    if dis >= 0.2:
        return np.array([0.0, 0.0, math.copysign(h_speed, h_height - r_i_height)])
    return np.array([0.0, 0.0, (h_height - r_i_height) / (dis + 0.4) * h_speed])


def v_fmt(target_i: np.ndarray, r_i: np.ndarray, h_speed: float) -> np.ndarray:
    """Formation-slot seeking, same shape as the goal term with a 0.1 m knee."""
    diff = as_vec3(target_i) - as_vec3(r_i)
    dis = float(np.linalg.norm(diff))
    if dis > 0.1:
        return diff / dis * h_speed
    return diff / (dis + 0.2) * h_speed


def v_ali(v_i: np.ndarray, v_j: np.ndarray, r_ij: float,
          gain: tuple[float, float, float] = (2.0, 2.0, 1.0)) -> np.ndarray:
    """Pairwise alignment term with componentwise gain and inverse-square
    distance falloff."""
    if r_ij <= 0:
        raise ValueError("r_ij must be positive")
    return np.asarray(gain, dtype=float) * (as_vec3(v_i) - as_vec3(v_j)) / (r_ij + 1.0) ** 2


@dataclass(frozen=True)
class FlockingTerms:
    flock: np.ndarray
    fmt: np.ndarray
    rep: np.ndarray
    att: np.ndarray
    saf: np.ndarray
    hei: np.ndarray
    ali: np.ndarray

    @staticmethod
    def zero() -> "FlockingTerms":
        z = np.zeros(3)
        return FlockingTerms(z, z, z, z, z, z, z)


def compose_velocity(terms: FlockingTerms, weights: FlockingWeights,
                     h_speed: float) -> np.ndarray:
    """Weighted superposition, rescaled to h_speed only when over the cap."""
    v = (
        weights.w_flock * terms.flock
        + weights.w_fmt * terms.fmt
        + weights.w_rep * terms.rep
        + weights.w_att * terms.att
        + weights.w_saf * terms.saf
        + weights.w_hei * terms.hei
        + weights.w_ali * terms.ali
    )
    speed = float(np.linalg.norm(v))
    if speed > h_speed:
        v = v / speed * h_speed
    return v


def obstacle_proximity(scenario: Scenario, p: np.ndarray) -> list[tuple[float, np.ndarray, bool]]:
    """Per obstacle: (body distance, away unit direction, inside flag).

    Body distance is center-to-surface minus the robot half-edge, floored at
    zero.  Inside an obstacle the away direction falls back to the vector
    from the obstacle centroid.
    """
    half = scenario.robot_edge / 2.0
    out = []
    for ob in scenario.obstacles:
        cp = box_closest_point(p, ob.min_corner, ob.max_corner)
        delta = p - cp
        dist = float(np.linalg.norm(delta))
        if dist > 0:
            away = delta / dist
            inside = False
        else:
            cdir = p - ob.center
            n = float(np.linalg.norm(cdir))
            away = cdir / n if n > 0 else np.array([0.0, 0.0, 1.0])
            inside = True
        out.append((max(dist - half, 0.0), away, inside))
    return out


def min_body_distance(scenario: Scenario, p: np.ndarray) -> float:
    half = scenario.robot_edge / 2.0
    if not scenario.obstacles:
        return math.inf
    return min(ob.distance(p) for ob in scenario.obstacles) - half


@dataclass(frozen=True)
class TickResult:
    states: tuple[RobotState, ...]
    events: tuple[dict, ...]


def tick(states: tuple[RobotState, ...], scenario: Scenario, prefs: PreferenceVector,
         targets: dict[int, np.ndarray] | None, dt: float, goal: np.ndarray,
         weights: FlockingWeights = FlockingWeights()) -> TickResult:
    """One Euler step of the full controller over an immutable snapshot.

    A robot whose step would enter the (robot half-edge + h_safety)-dilated
    obstacle zone is clamped to its previous position unless the move
    strictly increases obstacle distance (escaping a degenerate start).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    goal = as_vec3(goal)
    events: list[dict] = []
    new_states: list[RobotState] = []
    blo = scenario.bounds.min_corner + scenario.robot_edge / 2.0
    bhi = scenario.bounds.max_corner - scenario.robot_edge / 2.0

    for st in states:
        terms_rep = np.zeros(3)
        terms_att = np.zeros(3)
        terms_ali = np.zeros(3)
        for other in states:
            if other.id == st.id:
                continue
            r_ij = float(np.linalg.norm(st.position - other.position))
            if r_ij == 0.0:
                # deterministic tie-break along the axis of the lower id
                axis = np.zeros(3)
                axis[min(st.id, other.id) % 3] = 1.0
                push = prefs.h_inner * axis
                terms_rep = terms_rep + (push if st.id < other.id else -push)
                events.append({"event": "degenerate_pair", "ids": sorted([st.id, other.id])})
                continue
            terms_rep = terms_rep + v_rep(st.position, other.position, prefs.h_inner)
            terms_att = terms_att + v_att(st.position, other.position, prefs.h_inner)
            terms_ali = terms_ali + v_ali(
                st.velocity, other.velocity, r_ij, weights.alignment_gain
            )
        terms_saf = np.zeros(3)
        for dist, away, inside in obstacle_proximity(scenario, st.position):
            if inside:
                events.append({"event": "inside_obstacle", "id": st.id})
            terms_saf = terms_saf + v_saf(dist, away, prefs.h_safety, prefs.h_speed)
        fmt = np.zeros(3)
        if targets is not None and st.id in targets:
            fmt = v_fmt(targets[st.id], st.position, prefs.h_speed)
        terms = FlockingTerms(
            flock=v_flock(goal, st.position, prefs.h_speed),
            fmt=fmt,
            rep=terms_rep,
            att=terms_att,
            saf=terms_saf,
            hei=v_hei(float(st.position[2]), prefs.h_height, prefs.h_speed),
            ali=terms_ali,
        )
        v = compose_velocity(terms, weights, prefs.h_speed)
        new_pos = st.position + v * dt
        clamped_bounds = np.minimum(np.maximum(new_pos, blo), bhi)
        if not np.array_equal(clamped_bounds, new_pos):
            events.append({"event": "bounds_clamp", "id": st.id})
            new_pos = clamped_bounds
        old_d = min_body_distance(scenario, st.position)
        new_d = min_body_distance(scenario, new_pos)
        if new_d < prefs.h_safety and old_d >= prefs.h_safety:
            # drop the inward motion component and keep the slide along the
            # obstacle face, then push the result back onto the margin
            # surface; rounding a corner keeps distance near the margin and
            # the projection absorbs the numerical dip
            v_slide = v.copy()
            for dist, away, _ in obstacle_proximity(scenario, new_pos):
                inward = float(v_slide @ away)
                if dist < prefs.h_safety and inward < 0.0:
                    v_slide = v_slide - inward * away
            slide_pos = np.minimum(np.maximum(st.position + v_slide * dt, blo), bhi)
            for _ in range(3):
                prox = obstacle_proximity(scenario, slide_pos)
                dist, away, _ = min(prox, key=lambda t: t[0])
                if dist >= prefs.h_safety:
                    break
                slide_pos = np.minimum(np.maximum(
                    slide_pos + away * (prefs.h_safety - dist + 1e-9), blo), bhi)
            if min_body_distance(scenario, slide_pos) >= prefs.h_safety:
                events.append({"event": "safety_slide", "id": st.id})
                new_pos = slide_pos
                v = (slide_pos - st.position) / dt
            else:
                events.append({"event": "safety_clamp", "id": st.id,
                               "distance": new_d, "margin": prefs.h_safety})
                new_pos = st.position
                v = np.zeros(3)
        elif new_d < prefs.h_safety:
            # started inside the margin: safety overrides every other
            # term and the robot backs straight out at full speed
            esc = np.zeros(3)
            for dist, away, _ in obstacle_proximity(scenario, st.position):
                if dist < prefs.h_safety:
                    esc = esc + away
            norm = float(np.linalg.norm(esc))
            cand = st.position
            if norm > 0.0:
                cand = np.minimum(np.maximum(
                    st.position + (esc / norm) * prefs.h_speed * dt, blo), bhi)
            cand_d = min_body_distance(scenario, cand)
            if cand_d > old_d:
                events.append({"event": "margin_escape", "id": st.id,
                               "distance": cand_d})
                v = (cand - st.position) / dt
                new_pos = cand
            else:  # opposing faces pin the robot; hold position
                events.append({"event": "safety_clamp", "id": st.id,
                               "distance": new_d, "margin": prefs.h_safety})
                new_pos = st.position
                v = np.zeros(3)
        new_states.append(replace(st, position=new_pos, velocity=v))
    return TickResult(states=tuple(new_states), events=tuple(events))


def centroid(states: tuple[RobotState, ...]) -> np.ndarray:
    return np.mean([st.position for st in states], axis=0)


def swarm_summary_of(states: tuple[RobotState, ...]):
    from .world import SwarmSummary

    speeds = [float(np.linalg.norm(st.velocity)) for st in states]
    heights = [float(st.position[2]) for st in states]
    return SwarmSummary(mean_speed=float(np.mean(speeds)), mean_height=float(np.mean(heights)))
