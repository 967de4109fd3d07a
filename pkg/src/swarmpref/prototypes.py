"""Formation prototype library: named local position sets at unit spacing.

Local frames are centered horizontal (z = 0) arrangements whose minimum
pairwise distance is exactly 1, so a fitted scale s equals the realized
inter-robot spacing.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROTOTYPE_ORDER = ("line", "column", "wedge", "grid", "circle")


@dataclass(frozen=True)
class FormationPrototype:
    name: str
    local_positions: np.ndarray  # (n, 3), unit min spacing

    def __post_init__(self):
        pts = np.asarray(self.local_positions, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("local_positions must be (n, 3) with n >= 1")
        object.__setattr__(self, "local_positions", pts)
        if pts.shape[0] > 1:
            dmin = _min_spacing(pts)
            if abs(dmin - 1.0) > 1e-9:
                raise ValueError(f"prototype {self.name!r} min spacing {dmin} != 1")

    @property
    def n_robots(self) -> int:
        return self.local_positions.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.local_positions.mean(axis=0)

    @property
    def min_spacing(self) -> float:
        if self.n_robots < 2:
            return 0.0
        return _min_spacing(self.local_positions)

    def to_dict(self) -> dict:
        return {"name": self.name, "positions": self.local_positions.tolist()}


def _min_spacing(pts: np.ndarray) -> float:
    n = pts.shape[0]
    dmin = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            dmin = min(dmin, float(np.linalg.norm(pts[i] - pts[j])))
    return dmin


def _normalized(name: str, pts: np.ndarray) -> FormationPrototype:
    pts = np.asarray(pts, dtype=float)
    if pts.shape[0] > 1:
        pts = pts / _min_spacing(pts)
    return FormationPrototype(name=name, local_positions=pts)


def default_prototypes(n_robots: int) -> tuple[FormationPrototype, ...]:
    """line, column, wedge, grid, circle for a team of n_robots."""
    if n_robots < 1:
        raise ValueError("n_robots must be >= 1")
    k = np.arange(n_robots, dtype=float)
    line = np.stack([k - k.mean(), np.zeros(n_robots), np.zeros(n_robots)], axis=1)
    column = np.stack([np.zeros(n_robots), k - k.mean(), np.zeros(n_robots)], axis=1)
    # symmetric V: leader ahead, wings trailing diagonally
    wedge = []
    for i in range(n_robots):
        rank = (i + 1) // 2
        side = -1.0 if i % 2 else 1.0
        wedge.append([-rank * 1.0, side * rank * 1.0 if rank else 0.0, 0.0])
    wedge = np.asarray(wedge)
    wedge -= wedge.mean(axis=0)
    cols = max(int(math.ceil(math.sqrt(n_robots))), 1)
    grid = np.array([[i % cols, i // cols, 0.0] for i in range(n_robots)], dtype=float)
    grid -= grid.mean(axis=0)
    if n_robots == 1:
        circle = np.zeros((1, 3))
    else:
        ang = 2 * math.pi * k / n_robots
        circle = np.stack([np.cos(ang), np.sin(ang), np.zeros(n_robots)], axis=1)
    protos = [
        _normalized("line", line),
        _normalized("column", column),
        _normalized("wedge", wedge),
        _normalized("grid", grid),
        _normalized("circle", circle),
    ]
    return tuple(protos)


def save_prototypes(protos: tuple[FormationPrototype, ...], path: str | Path) -> None:
    doc = [{"name": p.name, "positions": p.local_positions.tolist()} for p in protos]
    Path(path).write_text(json.dumps(doc, indent=2))


def load_prototypes(path: str | Path) -> tuple[FormationPrototype, ...]:
    doc = json.loads(Path(path).read_text())
    return tuple(FormationPrototype(d["name"], np.asarray(d["positions"])) for d in doc)
