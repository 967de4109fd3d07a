"""Live mission service: one mission loop, many websocket watchers.

The mission engine runs as a single asyncio task.  Whoever connects first
with role=operator answers preference queries and may steer the mission;
everyone else watches.  Queries unanswered within the timeout fall back to
the model prediction, so a dead console never stalls the flight.
"""
from __future__ import annotations

import asyncio
import json
import time

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .configs import GpConfig, MissionConfig
from .mission import MissionEngine, OracleSpec
from .preference_gp import GpModelState
from .prototypes import FormationPrototype
from .wire import ProtocolError, parse_client_message, prefs_from_dict, prefs_to_dict
from .world import Scenario


class MissionSession:
    """Engine plus connection bookkeeping; strictly single-loop."""

    def __init__(self, scenario: Scenario, model: GpModelState,
                 cfg: MissionConfig, gp_cfg: GpConfig,
                 prototypes: list[FormationPrototype] | None = None,
                 oracle: OracleSpec | None = None,
                 auto_answer: bool = False,
                 pacing_s: float = 0.0,
                 snapshot_hz: float = 15.0):
        self.engine = MissionEngine(scenario, model, cfg, prototypes,
                                    gp_cfg=gp_cfg)
        self.cfg = cfg
        self.oracle = oracle
        self.auto_answer = auto_answer
        self.pacing_s = pacing_s
        self.snapshot_interval = 1.0 / snapshot_hz
        self.clients: dict[WebSocket, str] = {}
        self.operator: WebSocket | None = None
        self.paused = False
        self.seq = 0
        self.task: asyncio.Task | None = None
        self.resume_event = asyncio.Event()
        self.resume_event.set()
        self.feedback_box: asyncio.Future | None = None
        self._last_snapshot = 0.0

    # -- outbound ---------------------------------------------------------

    def _frame(self, kind: str, **payload) -> str:
        self.seq += 1
        msg = {"type": kind, "seq": self.seq}
        msg.update(payload)
        return json.dumps(msg)

    async def _send(self, ws: WebSocket, text: str) -> None:
        try:
            await ws.send_text(text)
        except Exception:
            self._drop(ws)

    async def broadcast(self, kind: str, **payload) -> None:
        text = self._frame(kind, **payload)
        for ws in list(self.clients):
            await self._send(ws, text)

    async def send_snapshot(self, force: bool = False) -> None:
        now = time.monotonic()
        if not force and now - self._last_snapshot < self.snapshot_interval:
            return
        self._last_snapshot = now
        snap = self.engine.snapshot()
        snap["paused"] = self.paused
        await self.broadcast("state_snapshot", **snap)

    async def _broadcast_events(self, events: list[dict]) -> None:
        for ev in events:
            if ev["type"] == "region":
                region = self.engine.region
                dilated = self.engine.dilated
                await self.broadcast(
                    "region_update", tick=ev["tick"],
                    polytope=region.polytope.to_dict() if region else None,
                    ellipsoid=region.ellipsoid.to_dict() if region else None,
                    dilated=dilated.to_dict() if dilated else None)
            elif ev["type"] == "region_infeasible":
                await self.broadcast("region_update", tick=ev["tick"],
                                     polytope=None, ellipsoid=None, dilated=None)
            elif ev["type"] == "preference":
                await self.broadcast(
                    "preference_update", tick=ev["tick"], source=ev["source"],
                    values=prefs_to_dict(self.engine.prefs.as_array()))

    # -- connection handling ----------------------------------------------

    def _drop(self, ws: WebSocket) -> None:
        self.clients.pop(ws, None)
        if self.operator is ws:
            self.operator = None

    def hello_payload(self, role: str) -> dict:
        return {
            "role": role,
            "pref_dims": list(self.cfg.ranges.to_dict()),
            "ranges": self.cfg.ranges.to_dict(),
            "prototypes": [p.to_dict() for p in self.engine.prototypes],
            "scenario": self.engine.scenario.to_dict(),
            "query_timeout_s": self.cfg.query_timeout_s,
        }

    async def attach(self, ws: WebSocket, want_operator: bool) -> str:
        role = "viewer"
        if want_operator and self.operator is None:
            self.operator = ws
            role = "operator"
        self.clients[ws] = role
        await self._send(ws, self._frame("hello", **self.hello_payload(role)))
        await self.send_snapshot(force=True)
        if self.task is None:
            self.task = asyncio.get_running_loop().create_task(self.run())
        return role

    async def handle_client(self, ws: WebSocket, text: str) -> None:
        try:
            msg = parse_client_message(text)
        except ProtocolError as e:
            await self._send(ws, self._frame("error", reason=str(e)))
            return
        if self.clients.get(ws) != "operator":
            await self._send(ws, self._frame("error", reason="operator role required"))
            return
        if msg["type"] == "feedback":
            pending = self.engine.pending_query
            if (pending is None or self.feedback_box is None
                    or self.feedback_box.done()
                    or msg["query_id"] != pending["query_id"]):
                await self._send(ws, self._frame("error", reason="stale query"))
                return
            self.feedback_box.set_result(
                (prefs_from_dict(msg["values"]), float(msg["confidence"])))
        else:
            await self._apply_control(msg)

    async def _apply_control(self, msg: dict) -> None:
        action = msg["action"]
        if action == "pause":
            self.paused = True
            self.resume_event.clear()
        elif action == "resume":
            self.paused = False
            self.resume_event.set()
        elif action == "abort":
            self.engine.abort()
            self.resume_event.set()
        elif action == "set_threshold":
            self.engine.set_threshold(float(msg["value"]))
        await self.send_snapshot(force=True)

    # -- mission loop -------------------------------------------------------

    async def _resolve_query(self) -> None:
        q = self.engine.pending_query
        await self.broadcast(
            "query_request", tick=self.engine.tick_count,
            query_id=q["query_id"], env=q["env"],
            predicted=prefs_to_dict(q["predicted"]),
            trace=q["trace"], timeout_s=self.cfg.query_timeout_s)
        if self.auto_answer and self.oracle is not None:
            values, conf = self.oracle.sample(q["env"], self.cfg.ranges,
                                              self.engine.oracle_rng)
            events = self.engine.provide_feedback(values, conf)
        else:
            self.feedback_box = asyncio.get_running_loop().create_future()
            try:
                values, conf = await asyncio.wait_for(
                    self.feedback_box, timeout=self.cfg.query_timeout_s)
                events = self.engine.provide_feedback(values, conf)
            except asyncio.TimeoutError:
                events = self.engine.decline_query()
            finally:
                self.feedback_box = None
        await self._broadcast_events(events)

    async def run(self) -> None:
        steps = 0
        while self.engine.active:
            if self.paused:
                await self.send_snapshot(force=True)
                await self.resume_event.wait()
                continue
            if self.engine.needs_feedback:
                await self._resolve_query()
                continue
            events = self.engine.step()
            await self._broadcast_events(events)
            await self.send_snapshot()
            steps += 1
            if self.pacing_s > 0:
                await asyncio.sleep(self.pacing_s)
            elif steps % 10 == 0:
                await asyncio.sleep(0)
        await self.send_snapshot(force=True)


def build_app(scenario: Scenario, model: GpModelState,
              cfg: MissionConfig = MissionConfig(),
              gp_cfg: GpConfig = GpConfig(),
              prototypes: list[FormationPrototype] | None = None,
              oracle: OracleSpec | None = None,
              auto_answer: bool = False,
              pacing_s: float = 0.0,
              snapshot_hz: float = 15.0) -> FastAPI:
    app = FastAPI(title="swarmpref mission service")
    session = MissionSession(scenario, model, cfg, gp_cfg, prototypes,
                             oracle=oracle, auto_answer=auto_answer,
                             pacing_s=pacing_s, snapshot_hz=snapshot_hz)
    app.state.session = session

    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "active": session.engine.active}

    @app.get("/log")
    async def log():
        return session.engine.log.to_dict()

    @app.get("/summary")
    async def summary():
        e = session.engine
        return {"success": e.success, "violations": e.violations,
                "queries_used": e.queries_used, "updates": e.updates,
                "tick": e.tick_count, "done": e.done, "aborted": e.aborted,
                "digest": e.log.digest()}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        want_operator = websocket.query_params.get("role") == "operator"
        await session.attach(websocket, want_operator)
        try:
            while True:
                text = await websocket.receive_text()
                await session.handle_client(websocket, text)
        except WebSocketDisconnect:
            session._drop(websocket)

    return app
