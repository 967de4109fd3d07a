"""Wire protocol for the live mission service.

JSON text frames over a websocket.  The server emits hello, state_snapshot,
region_update, preference_update, query_request, and error; clients send
feedback and control.  All geometry is meters in the world frame, z-up.
Every server frame carries a monotonically increasing ``seq``.
"""
from __future__ import annotations

import json

import numpy as np

from .configs import PREF_DIMS


class ProtocolError(ValueError):
    """Malformed or out-of-contract client message."""


_VEC3 = {"type": "array", "items": {"type": "number"},
         "minItems": 3, "maxItems": 3}
_PREFS = {
    "type": "object",
    "properties": {k: {"type": "number"} for k in PREF_DIMS},
    "required": list(PREF_DIMS),
    "additionalProperties": False,
}
_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_NUMBERS = {"type": "array", "items": {"type": "number"}}

SCHEMAS: dict[str, dict] = {
    "hello": {
        "type": "object",
        "properties": {
            "type": {"const": "hello"},
            "seq": {"type": "integer"},
            "role": {"enum": ["operator", "viewer"]},
            "pref_dims": {"type": "array", "items": {"type": "string"}},
            "ranges": {"type": "object"},
            "prototypes": {"type": "array",
                           "items": {"type": "object",
                                     "properties": {"name": {"type": "string"},
                                                    "positions": _MATRIX},
                                     "required": ["name", "positions"]}},
            "scenario": {"type": "object"},
            "query_timeout_s": {"type": "number"},
        },
        "required": ["type", "seq", "role", "pref_dims", "ranges",
                     "prototypes", "scenario"],
    },
    "state_snapshot": {
        "type": "object",
        "properties": {
            "type": {"const": "state_snapshot"},
            "seq": {"type": "integer"},
            "tick": {"type": "integer"},
            "waypoint_index": {"type": "integer"},
            "n_waypoints": {"type": "integer"},
            "waypoint": _VEC3,
            "goal": _VEC3,
            "robots": {"type": "array",
                       "items": {"type": "object",
                                 "properties": {"id": {"type": "integer"},
                                                "position": _VEC3,
                                                "velocity": _VEC3},
                                 "required": ["id", "position", "velocity"]}},
            "centroid": _VEC3,
            "preferences": _PREFS,
            "formation": {"type": ["string", "null"]},
            "budget": {"type": "integer"},
            "threshold": {"type": "number"},
            "violations": {"type": "integer"},
            "paused": {"type": "boolean"},
            "done": {"type": "boolean"},
            "aborted": {"type": "boolean"},
            "success": {"type": "boolean"},
        },
        "required": ["type", "seq", "tick", "robots", "centroid", "goal",
                     "waypoint", "preferences", "budget", "threshold",
                     "paused", "done", "aborted"],
    },
    "region_update": {
        "type": "object",
        "properties": {
            "type": {"const": "region_update"},
            "seq": {"type": "integer"},
            "tick": {"type": "integer"},
            "polytope": {"type": ["object", "null"],
                         "properties": {"A": _MATRIX, "b": _NUMBERS},
                         "required": ["A", "b"]},
            "ellipsoid": {"type": ["object", "null"],
                          "properties": {"C": _MATRIX, "d": _VEC3},
                          "required": ["C", "d"]},
            "dilated": {"type": ["object", "null"],
                        "properties": {"A": _MATRIX, "b": _NUMBERS,
                                       "offsets": _NUMBERS,
                                       "feasible": {"type": "boolean"}},
                        "required": ["A", "offsets", "feasible"]},
        },
        "required": ["type", "seq", "tick", "polytope", "dilated"],
    },
    "preference_update": {
        "type": "object",
        "properties": {
            "type": {"const": "preference_update"},
            "seq": {"type": "integer"},
            "tick": {"type": "integer"},
            "source": {"enum": ["model", "feedback"]},
            "values": _PREFS,
        },
        "required": ["type", "seq", "tick", "source", "values"],
    },
    "query_request": {
        "type": "object",
        "properties": {
            "type": {"const": "query_request"},
            "seq": {"type": "integer"},
            "tick": {"type": "integer"},
            "query_id": {"type": "integer"},
            "env": {"type": "string"},
            "predicted": _PREFS,
            "trace": {"type": "number"},
            "timeout_s": {"type": "number"},
        },
        "required": ["type", "seq", "tick", "query_id", "env", "predicted",
                     "trace", "timeout_s"],
    },
    "error": {
        "type": "object",
        "properties": {
            "type": {"const": "error"},
            "seq": {"type": "integer"},
            "reason": {"type": "string"},
        },
        "required": ["type", "seq", "reason"],
    },
    "feedback": {
        "type": "object",
        "properties": {
            "type": {"const": "feedback"},
            "query_id": {"type": "integer"},
            "values": _PREFS,
            "confidence": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "required": ["type", "query_id", "values", "confidence"],
    },
    "control": {
        "type": "object",
        "properties": {
            "type": {"const": "control"},
            "action": {"enum": ["pause", "resume", "abort", "set_threshold"]},
            "value": {"type": "number"},
        },
        "required": ["type", "action"],
    },
}

SERVER_TYPES = ("hello", "state_snapshot", "region_update",
                "preference_update", "query_request", "error")
CLIENT_TYPES = ("feedback", "control")


def prefs_to_dict(values: np.ndarray) -> dict[str, float]:
    return {k: float(v) for k, v in zip(PREF_DIMS, np.asarray(values).reshape(-1))}


def prefs_from_dict(d: dict) -> np.ndarray:
    try:
        return np.array([float(d[k]) for k in PREF_DIMS])
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"bad preference object: {e}") from e


def parse_client_message(text: str) -> dict:
    """Validate one client frame; returns the parsed dict."""
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"not json: {e}") from e
    if not isinstance(msg, dict):
        raise ProtocolError("frame must be an object")
    kind = msg.get("type")
    if kind == "feedback":
        if not isinstance(msg.get("query_id"), int):
            raise ProtocolError("feedback.query_id must be an integer")
        prefs_from_dict(msg.get("values"))
        conf = msg.get("confidence")
        if not isinstance(conf, (int, float)) or not 0 <= conf <= 1:
            raise ProtocolError("feedback.confidence must be in [0, 1]")
        return msg
    if kind == "control":
        action = msg.get("action")
        if action not in ("pause", "resume", "abort", "set_threshold"):
            raise ProtocolError(f"unknown control action: {action!r}")
        if action == "set_threshold":
            value = msg.get("value")
            if not isinstance(value, (int, float)) or value < 0:
                raise ProtocolError("set_threshold needs a value >= 0")
        return msg
    raise ProtocolError(f"unknown client message type: {kind!r}")
