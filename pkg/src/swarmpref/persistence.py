"""Feedback dataset stored as one JSON object per line.

Lines are append-only so a crashed run loses at most the line being
written; loading skips anything unparseable and reports how many lines
were dropped.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .configs import PREF_DIMS


@dataclass(frozen=True)
class FeedbackSample:
    x: np.ndarray            # (D,) raw features
    y: np.ndarray            # (P,) physical preference values
    confidence: float = 1.0
    env: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))
        if self.y.shape[0] != len(PREF_DIMS):
            raise ValueError(f"expected {len(PREF_DIMS)} preference values")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("non-finite sample")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence outside [0, 1]")

    def to_dict(self) -> dict:
        out = {"x": self.x.tolist(), "y": self.y.tolist(),
               "confidence": self.confidence}
        if self.env is not None:
            out["env"] = self.env
        if self.meta:
            out["meta"] = self.meta
        return out

    @staticmethod
    def from_dict(d: dict) -> "FeedbackSample":
        return FeedbackSample(
            x=np.asarray(d["x"], dtype=float),
            y=np.asarray(d["y"], dtype=float),
            confidence=float(d.get("confidence", 1.0)),
            env=d.get("env"),
            meta=d.get("meta", {}),
        )


def append_sample(path: str, sample: FeedbackSample) -> None:
    line = json.dumps(sample.to_dict())
    with open(path, "a") as f:
        f.write(line + "\n")
        f.flush()
        os.fsync(f.fileno())


def load_samples(path: str) -> tuple[list[FeedbackSample], int]:
    """All parseable samples plus the count of skipped lines."""
    samples: list[FeedbackSample] = []
    skipped = 0
    if not os.path.exists(path):
        return samples, skipped
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(FeedbackSample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError):
                skipped += 1
    return samples, skipped


def samples_to_arrays(samples: list[FeedbackSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, 0)), np.zeros((0, len(PREF_DIMS)))
    X = np.stack([s.x for s in samples])
    Y = np.stack([s.y for s in samples])
    return X, Y
