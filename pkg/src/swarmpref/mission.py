"""Mission orchestration: plan, query, adapt, fly.

A mission follows grid waypoints toward the goal.  At each waypoint the
model predicts the preferred flight parameters from local features; when
the predictive covariance is too large and query budget remains, the
operator (or a synthetic stand-in) is asked instead, the answer is stored,
and the model is refit.  The active preferences then shape the safe region,
the formation fit, and the flocking behavior until the next waypoint.

The engine is incremental so the same logic drives both the offline runner
and the live serve loop.  Everything is seeded; mission logs hash to the
same digest across repeated runs.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .configs import PREF_DIMS, GpConfig, MissionConfig, PreferenceRanges
from .flocking import (FlockingWeights, PreferenceVector, RobotState,
                       centroid, min_body_distance, swarm_summary_of, tick)
from .formation import assign_slots, fit_with_fallback
from .persistence import FeedbackSample
from .preference_gp import GpModelState, predict, train
from .prototypes import FormationPrototype, default_prototypes
from .safe_region import (DilatedPolytope, InfeasibleSeedError, RegionResult,
                          dilate, inflate_region)
from .world import (Obstacle, OccupancyGrid, Scenario, SwarmSummary,
                    extract_features, rasterize)

ORACLE_SEED_OFFSET = 7919


class PathError(RuntimeError):
    """No collision-free grid path between start and goal."""


def plan_path(grid: OccupancyGrid, start: tuple[int, int, int],
              goal: tuple[int, int, int]) -> list[tuple[int, int, int]]:
    """A* over the 6-connected free cells, unit step cost."""
    if not grid.is_free(start):
        raise PathError(f"start cell {start} blocked")
    if not grid.is_free(goal):
        raise PathError(f"goal cell {goal} blocked")

    def h(c):
        return abs(c[0] - goal[0]) + abs(c[1] - goal[1]) + abs(c[2] - goal[2])

    open_heap: list[tuple[int, int, tuple[int, int, int]]] = [(h(start), 0, start)]
    g_cost = {start: 0}
    came: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    closed: set[tuple[int, int, int]] = set()
    while open_heap:
        f, g, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in came:
                cell = came[cell]
                path.append(cell)
            path.reverse()
            return path
        closed.add(cell)
        i, j, k = cell
        for nb in ((i + 1, j, k), (i - 1, j, k), (i, j + 1, k),
                   (i, j - 1, k), (i, j, k + 1), (i, j, k - 1)):
            if not grid.is_free(nb) or nb in closed:
                continue
            ng = g + 1
            if ng < g_cost.get(nb, np.inf):
                g_cost[nb] = ng
                came[nb] = cell
                heapq.heappush(open_heap, (ng + h(nb), ng, nb))
    raise PathError("goal unreachable")


def waypoints_from_path(grid: OccupancyGrid, path: list[tuple[int, int, int]],
                        stride: int) -> list[np.ndarray]:
    """Every stride-th cell center plus the final one."""
    idx = list(range(0, len(path), max(1, stride)))
    if idx[-1] != len(path) - 1:
        idx.append(len(path) - 1)
    return [grid.cell_center(path[i]) for i in idx]


def query_gate(trace: float, n_outputs: int, threshold: float, budget: int) -> bool:
    """Ask the operator when mean predictive variance exceeds the threshold
    and budget remains."""
    return budget > 0 and (trace / n_outputs) > threshold


@dataclass(frozen=True)
class OracleSpec:
    """Synthetic operator: per-environment preferred values plus a per-output
    answer spread in normalized units."""

    means: dict[str, np.ndarray]
    stds_norm: dict[str, np.ndarray]

    def labels(self) -> list[str]:
        return sorted(self.means)

    def sample(self, env: str, ranges: PreferenceRanges,
               rng: np.random.Generator) -> tuple[np.ndarray, float]:
        mean = self.means[env]
        std = self.stds_norm[env]
        y_norm = ranges.normalize(mean) + std * rng.standard_normal(len(PREF_DIMS))
        y_norm = np.clip(y_norm, 0.0, 1.0)
        conf = float(np.clip(1.0 - 4.0 * float(np.mean(std)), 0.5, 1.0))
        return ranges.denormalize(y_norm), conf

    def to_dict(self) -> dict:
        return {
            "format": "swarmpref-oracle",
            "envs": {
                label: {
                    "mean": dict(zip(PREF_DIMS, self.means[label].tolist())),
                    "std_norm": dict(zip(PREF_DIMS, self.stds_norm[label].tolist())),
                }
                for label in self.labels()
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "OracleSpec":
        envs = d["envs"]
        means = {}
        stds = {}
        for label, spec in envs.items():
            means[label] = np.array([float(spec["mean"][k]) for k in PREF_DIMS])
            stds[label] = np.array([float(spec["std_norm"][k]) for k in PREF_DIMS])
        return OracleSpec(means=means, stds_norm=stds)


def load_oracle(path: str) -> OracleSpec:
    with open(path) as f:
        return OracleSpec.from_dict(json.load(f))


def _strip_wall_time(obj):
    if isinstance(obj, dict):
        return {k: _strip_wall_time(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [_strip_wall_time(v) for v in obj]
    return obj


def _jsonable(obj):
    """Native-type copy of an event payload; numpy scalars and arrays would
    otherwise break serialization and make digests backend-dependent."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


class MissionLog:
    """Ordered event record; the digest ignores wall-clock fields."""

    def __init__(self):
        self.events: list[dict] = []

    def add(self, kind: str, tick_no: int, **payload) -> dict:
        event = {"type": kind, "tick": tick_no}
        event.update(_jsonable(payload))
        event["wall_time"] = time.time()
        self.events.append(event)
        return event

    def digest(self) -> str:
        canon = json.dumps(_strip_wall_time(self.events), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"events": self.events, "digest": self.digest()}


def _round3(x: np.ndarray) -> list[float]:
    return [round(float(v), 6) for v in np.asarray(x).reshape(-1)]


class MissionEngine:
    """Incremental mission state machine.

    Phases per waypoint: entry (predict, maybe raise a query), setup
    (region, formation, targets), fly (ticks until reached or out of time).
    When a query is pending the engine idles until provide_feedback or
    decline_query is called.
    """

    def __init__(self, scenario: Scenario, model: GpModelState,
                 cfg: MissionConfig = MissionConfig(),
                 prototypes: list[FormationPrototype] | None = None,
                 gp_cfg: GpConfig = GpConfig(),
                 dataset: list[FeedbackSample] | None = None):
        self.scenario = scenario
        self.model = model
        self.cfg = cfg
        self.gp_cfg = gp_cfg
        self.prototypes = prototypes if prototypes is not None \
            else default_prototypes(cfg.n_robots)
        self.dataset: list[FeedbackSample] = list(dataset) if dataset else []
        self.rng = np.random.default_rng(cfg.seed)
        self.oracle_rng = np.random.default_rng(cfg.seed + ORACLE_SEED_OFFSET)
        self.weights = FlockingWeights()
        self.log = MissionLog()

        self.grid = rasterize(scenario)
        start = np.asarray(cfg.start, dtype=float)
        start_cell = self._nearest_free_cell(self.grid.point_to_cell(start))
        goal_cell = self._nearest_free_cell(self.grid.point_to_cell(scenario.goal))
        path = plan_path(self.grid, start_cell, goal_cell)
        self.waypoints = waypoints_from_path(self.grid, path, cfg.waypoint_stride)
        self.log.add("plan", 0, cells=len(path), waypoints=len(self.waypoints))

        self.states = self._spawn_robots(start)
        self.prefs = PreferenceVector.from_array(
            (cfg.ranges.lo() + cfg.ranges.hi()) / 2.0)
        self.targets: dict[int, np.ndarray] | None = None
        self.region: RegionResult | None = None
        self.dilated: DilatedPolytope | None = None

        self.budget = cfg.query_budget
        self.threshold = cfg.covariance_threshold
        self.tick_count = 0
        self.wp_idx = 0
        self.phase = "entry"
        self.fly_ticks = 0
        self.pending_query: dict | None = None
        self.query_seq = 0
        self.updates = 0
        self.violations = 0
        self.queries_used = 0
        self.done = False
        self.aborted = False
        self.success = False

    # -- setup helpers -------------------------------------------------

    def _nearest_free_cell(self, cell: tuple[int, int, int]) -> tuple[int, int, int]:
        if self.grid.is_free(cell):
            return cell
        best = None
        best_d = np.inf
        for i in range(max(0, cell[0] - 3), min(self.grid.dims[0], cell[0] + 4)):
            for j in range(max(0, cell[1] - 3), min(self.grid.dims[1], cell[1] + 4)):
                for k in range(max(0, cell[2] - 3), min(self.grid.dims[2], cell[2] + 4)):
                    if self.grid.is_free((i, j, k)):
                        d = abs(i - cell[0]) + abs(j - cell[1]) + abs(k - cell[2])
                        if d < best_d:
                            best, best_d = (i, j, k), d
        if best is None:
            raise PathError(f"no free cell near {cell}")
        return best

    def _spawn_robots(self, start: np.ndarray) -> list[RobotState]:
        n = self.cfg.n_robots
        radius = 1.2
        states = []
        for i in range(n):
            angle = 2.0 * np.pi * i / n
            pos = start + np.array([radius * np.cos(angle),
                                    radius * np.sin(angle), 0.0])
            pos = np.clip(pos, self.scenario.bounds.min_corner + 0.2,
                          self.scenario.bounds.max_corner - 0.2)
            states.append(RobotState(id=i, position=pos, velocity=np.zeros(3)))
        return states

    # -- public state --------------------------------------------------

    @property
    def active(self) -> bool:
        return not (self.done or self.aborted)

    @property
    def needs_feedback(self) -> bool:
        return self.pending_query is not None

    @property
    def waypoint(self) -> np.ndarray:
        return self.waypoints[min(self.wp_idx, len(self.waypoints) - 1)]

    def current_features(self) -> np.ndarray:
        c = centroid(self.states)
        summary = swarm_summary_of(self.states)
        return extract_features(self.scenario, c, summary, self.cfg.features)

    def env_label(self) -> str:
        region = self.scenario.region_at(centroid(self.states))
        return region.label if region is not None else "open_space"

    def snapshot(self) -> dict:
        return {
            "tick": self.tick_count,
            "waypoint_index": self.wp_idx,
            "n_waypoints": len(self.waypoints),
            "waypoint": _round3(self.waypoint),
            "goal": _round3(self.scenario.goal),
            "robots": [
                {"id": s.id, "position": _round3(s.position),
                 "velocity": _round3(s.velocity)}
                for s in self.states
            ],
            "centroid": _round3(centroid(self.states)),
            "preferences": dict(zip(PREF_DIMS, _round3(self.prefs.as_array()))),
            "formation": self._formation_name,
            "budget": self.budget,
            "threshold": self.threshold,
            "violations": self.violations,
            "done": self.done,
            "aborted": self.aborted,
            "success": self.success,
        }

    # -- mission control ------------------------------------------------

    def abort(self) -> None:
        if self.active:
            self.aborted = True
            self.log.add("abort", self.tick_count)

    def set_threshold(self, value: float) -> None:
        self.threshold = float(value)
        self.log.add("control", self.tick_count, action="set_threshold",
                     value=float(value))

    def _adopt_prefs(self, values: np.ndarray, source: str) -> dict:
        """Make a preference vector active and log it.

        A raised safety margin is capped at the team's current worst
        clearance: robots keep every margin they already satisfy, and a
        margin nobody satisfies yet would only freeze them in place as
        instant violators.  The predicted value is adopted as soon as the
        team has flown clear enough for it.
        """
        values = np.asarray(values, dtype=float).reshape(-1).copy()
        requested = float(values[3])
        clearance = min(min_body_distance(self.scenario, s.position)
                        for s in self.states)
        values[3] = min(requested, max(0.0, clearance - 1e-6))
        self.prefs = PreferenceVector.from_array(values)
        payload = {"values": _round3(values), "source": source}
        if values[3] < requested:
            payload["requested_safety"] = round(requested, 6)
        return self.log.add("preference", self.tick_count, **payload)

    # -- query handling ---------------------------------------------------

    def provide_feedback(self, values: np.ndarray,
                         confidence: float) -> list[dict]:
        """Resolve the pending query with operator values and refit.

        The log records the answer, never the transport it arrived on, so
        offline and live runs of the same mission hash identically.
        """
        assert self.pending_query is not None
        q = self.pending_query
        self.pending_query = None
        values = np.asarray(values, dtype=float).reshape(-1)
        values = self.cfg.ranges.clamp(values)
        events = [self.log.add("feedback", self.tick_count,
                               query_id=q["query_id"], values=_round3(values),
                               confidence=round(float(confidence), 6))]
        sample = FeedbackSample(x=q["features"], y=values,
                                confidence=float(confidence), env=q["env"])
        self.dataset.append(sample)
        self.budget -= 1
        self.queries_used += 1
        events.append(self._update_model())
        events.append(self._adopt_prefs(values, "feedback"))
        self.phase = "setup"
        return events

    def decline_query(self) -> list[dict]:
        """No answer arrived; fall back to the model prediction."""
        assert self.pending_query is not None
        q = self.pending_query
        self.pending_query = None
        events = [self.log.add("query_fallback", self.tick_count,
                               query_id=q["query_id"])]
        events.append(self._adopt_prefs(np.asarray(q["predicted"]), "model"))
        self.phase = "setup"
        return events

    def _update_model(self) -> dict:
        X = np.stack([s.x for s in self.dataset])
        Y = np.stack([s.y for s in self.dataset])
        train_rng = np.random.default_rng([self.cfg.seed, 17, self.updates])
        cfg = replace(self.gp_cfg, n_steps=self.cfg.model_update_steps,
                      batch_size=self.cfg.model_update_batch)
        self.model, _, history = train(self.model, X, Y, cfg, train_rng)
        self.updates += 1
        return self.log.add("model_update", self.tick_count,
                            n_samples=len(self.dataset),
                            steps=len(history),
                            elbo=round(history[-1], 6) if history else None)

    # -- stepping -----------------------------------------------------------

    def step(self) -> list[dict]:
        """Advance one unit of work; no-op while a query is pending."""
        if not self.active or self.pending_query is not None:
            return []
        if self.phase == "entry":
            return self._enter_waypoint()
        if self.phase == "setup":
            return self._setup_waypoint()
        return self._fly_tick()

    def _enter_waypoint(self) -> list[dict]:
        feats = self.current_features()
        pred = predict(self.model, feats)
        trace = float(pred.trace[0])
        predicted = pred.mean[0]
        env = self.env_label()
        events = [self.log.add(
            "waypoint_entry", self.tick_count, index=self.wp_idx,
            waypoint=_round3(self.waypoint), env=env,
            trace=round(trace, 6), predicted=_round3(predicted))]
        if query_gate(trace, self.model.n_outputs, self.threshold, self.budget):
            self.query_seq += 1
            self.pending_query = {
                "query_id": self.query_seq,
                "features": feats,
                "predicted": predicted,
                "trace": trace,
                "env": env,
            }
            events.append(self.log.add("query", self.tick_count,
                                       query_id=self.query_seq, env=env,
                                       trace=round(trace, 6),
                                       predicted=_round3(predicted)))
        else:
            events.append(self._adopt_prefs(predicted, "model"))
            self.phase = "setup"
        return events

    _formation_name: str | None = None

    def _local_obstacles(self, seed: np.ndarray) -> list[Obstacle]:
        r = self.cfg.local_map_radius
        lo, hi = seed - r, seed + r
        out = []
        for ob in self.scenario.obstacles:
            if np.all(ob.min_corner <= hi) and np.all(ob.max_corner >= lo):
                out.append(ob)
        return out

    def _setup_waypoint(self) -> list[dict]:
        events: list[dict] = []
        seed = self.waypoint
        try:
            self.region = inflate_region(self.scenario, seed, self.cfg.region,
                                         obstacles=self._local_obstacles(seed))
        except InfeasibleSeedError:
            self.region = None
        if self.region is None:
            self.dilated = None
            events.append(self.log.add("region_infeasible", self.tick_count,
                                       seed=_round3(seed)))
        else:
            self.dilated = dilate(self.region.polytope, self.scenario.robot_edge,
                                  self.prefs.h_safety)
            events.append(self.log.add(
                "region", self.tick_count, seed=_round3(seed),
                planes=int(self.region.polytope.n_rows),
                logdet=round(self.region.ellipsoid.logdet, 6),
                converged=self.region.converged,
                dilated_feasible=self.dilated.feasible))
        fit = None
        if self.dilated is not None and self.dilated.feasible:
            preferred = self.prefs.formation_index(len(self.prototypes))
            fit, tried = fit_with_fallback(
                self.prototypes, preferred, self.dilated, self.waypoint,
                self.prefs.h_inner, self.prefs.h_height, self.cfg.formation)
            if fit is None:
                events.append(self.log.add("formation_infeasible",
                                           self.tick_count, tried=tried))
            else:
                events.append(self.log.add(
                    "formation", self.tick_count, name=fit.prototype,
                    tried=tried, cost=round(fit.cost, 6),
                    scale=round(fit.params.scale, 6),
                    yaw=round(fit.params.yaw, 6)))
        if fit is not None:
            current = np.stack([s.position for s in self.states])
            assign = assign_slots(current, fit.positions)
            self.targets = {s.id: fit.positions[assign[i]]
                            for i, s in enumerate(self.states)}
            self._formation_name = fit.prototype
        # on a failed fit the previous targets stay active
        self.phase = "fly"
        self.fly_ticks = 0
        return events

    def _dilated_margin(self) -> float:
        return self.scenario.robot_edge / 2.0 + self.prefs.h_safety

    def _check_violations(self) -> list[dict]:
        # same clearance metric the controller enforces, with a hair of
        # slack so boundary-exact positions do not flap
        events = []
        margin = self._dilated_margin() - 1e-9
        for s in self.states:
            for ob in self.scenario.obstacles:
                if ob.distance(s.position) < margin:
                    self.violations += 1
                    events.append(self.log.add(
                        "violation", self.tick_count, robot=s.id,
                        position=_round3(s.position)))
                    break
        return events

    def _fly_tick(self) -> list[dict]:
        events: list[dict] = []
        result = tick(self.states, self.scenario, self.prefs, self.targets,
                      self.cfg.dt, goal=self.waypoint, weights=self.weights)
        self.states = result.states
        self.tick_count += 1
        self.fly_ticks += 1
        if result.events:
            counts: dict[str, int] = {}
            for ev in result.events:
                counts[ev["event"]] = counts.get(ev["event"], 0) + 1
            events.append(self.log.add("clamps", self.tick_count, counts=counts))
        events.extend(self._check_violations())
        c = centroid(self.states)
        if self.tick_count % 50 == 0:
            events.append(self.log.add("fly_summary", self.tick_count,
                                       centroid=_round3(c)))
        reached = bool(np.linalg.norm((c - self.waypoint)[:2])
                       <= self.cfg.waypoint_reach_radius)
        timed_out = self.fly_ticks >= self.cfg.ticks_per_waypoint
        if reached or timed_out:
            kind = "waypoint_reached" if reached else "waypoint_timeout"
            events.append(self.log.add(kind, self.tick_count, index=self.wp_idx))
            self.wp_idx += 1
            if self.wp_idx >= len(self.waypoints):
                self.success = reached
                self._finish()
            else:
                self.phase = "entry"
        if self.tick_count >= self.cfg.max_ticks and not self.done:
            self.log.add("mission_timeout", self.tick_count)
            self.success = False
            self._finish()
        return events

    def _finish(self) -> None:
        self.done = True
        self.log.add("done", self.tick_count, success=self.success,
                     violations=self.violations, queries=self.queries_used,
                     updates=self.updates)


@dataclass(frozen=True)
class MissionResult:
    log: MissionLog
    model: GpModelState
    dataset: list[FeedbackSample]
    states: list[RobotState]
    success: bool
    violations: int
    queries_used: int

    @property
    def digest(self) -> str:
        return self.log.digest()

    def summary(self) -> dict:
        return {
            "success": self.success,
            "violations": self.violations,
            "queries_used": self.queries_used,
            "samples": len(self.dataset),
            "events": len(self.log.events),
            "digest": self.digest,
        }


def run_mission(scenario: Scenario, model: GpModelState,
                cfg: MissionConfig = MissionConfig(),
                oracle: OracleSpec | None = None,
                prototypes: list[FormationPrototype] | None = None,
                gp_cfg: GpConfig = GpConfig(),
                feedback_fn=None,
                dataset: list[FeedbackSample] | None = None) -> MissionResult:
    """Run a mission to completion.

    Queries are answered by feedback_fn(query) -> (values, confidence) or
    None when it declines, else by the synthetic oracle, else declined.
    """
    engine = MissionEngine(scenario, model, cfg, prototypes, gp_cfg, dataset)
    while engine.active:
        if engine.needs_feedback:
            q = engine.pending_query
            answer = None
            if feedback_fn is not None:
                answer = feedback_fn(q)
            elif oracle is not None:
                answer = oracle.sample(q["env"], cfg.ranges, engine.oracle_rng)
            if answer is None:
                engine.decline_query()
            else:
                values, conf = answer
                engine.provide_feedback(values, conf)
        engine.step()
    return MissionResult(
        log=engine.log,
        model=engine.model,
        dataset=engine.dataset,
        states=engine.states,
        success=engine.success,
        violations=engine.violations,
        queries_used=engine.queries_used,
    )
