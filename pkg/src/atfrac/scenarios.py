"""Experiment descriptions and the three built-in benchmark set-ups."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .energy import MaterialParams
from .mesh import Mesh, build_uniform, carve_hole, select_boundary_vertices
from .solvers import DirichletData

SLIT = 1e-3


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BoundaryClause(_Frozen):
    """Prescribes ``u = rate * t`` on the part of ``side`` inside ``interval``."""

    side: Literal["left", "right", "bottom", "top"]
    interval: Tuple[float, float] = (0.0, 1.0)
    rate: float

    @model_validator(mode="after")
    def _check_interval(self):
        lo, hi = self.interval
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"interval {self.interval} not within [0, 1]")
        return self

    def value(self, t: float) -> float:
        return self.rate * t


class Precrack(_Frozen):
    start: Tuple[float, float]
    end: Tuple[float, float]
    half_width: float = Field(0.5 * SLIT, ge=0)


class Hole(_Frozen):
    center: Tuple[float, float]
    radius: float = Field(gt=0)


class Tolerances(_Frozen):
    tol_v: float = Field(2e-3, gt=0)
    tol_lin: float = Field(1e-10, gt=0)
    max_outer: int = Field(10, ge=1)
    max_newton: int = Field(50, ge=1)
    linear_solver: Literal["lu", "cg"] = "lu"


class OutputOptions(_Frozen):
    snapshot_every: int = Field(0, ge=0)
    stop_when_broken: bool = True
    break_fraction: float = Field(0.05, gt=0, lt=1)
    break_steps: int = Field(3, ge=1)


class Scenario(_Frozen):
    name: str = "custom"
    mesh_h: int = Field(64, ge=1)
    params: MaterialParams = MaterialParams()
    tau: float = Field(0.01, gt=0)
    t_end: float = Field(1.0, gt=0)
    boundary: Tuple[BoundaryClause, ...] = ()
    precrack: Optional[Precrack] = None
    hole: Optional[Hole] = None
    tolerances: Tolerances = Tolerances()
    output: OutputOptions = OutputOptions()

    @model_validator(mode="after")
    def _check(self):
        if self.t_end < self.tau:
            raise ValueError("t_end must be at least tau")
        if self.precrack is not None:
            for pt in (self.precrack.start, self.precrack.end):
                if not all(0.0 <= c <= 1.0 for c in pt):
                    raise ValueError(f"pre-crack point {pt} outside the unit square")
        if self.hole is not None:
            (cx, cy), r = self.hole.center, self.hole.radius
            if not (0 < cx - r and cx + r < 1 and 0 < cy - r and cy + r < 1):
                raise ValueError("hole must lie strictly inside the unit square")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.tau))

    def times(self) -> np.ndarray:
        return np.arange(1, self.n_steps + 1) * self.tau

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.model_validate_json(text)

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_json(Path(path).read_text())

    def fingerprint(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def build_mesh(self) -> Mesh:
        mesh = build_uniform(self.mesh_h)
        if self.hole is not None:
            mesh = carve_hole(mesh, self.hole.center, self.hole.radius)
        return mesh


def _left_split(y_mouth: float, t_end: float, name: str, precrack: Precrack,
                hole: Optional[Hole] = None) -> Scenario:
    half = 0.5 * SLIT
    return Scenario(
        name=name,
        t_end=t_end,
        boundary=(
            BoundaryClause(side="left", interval=(0.0, y_mouth - half), rate=1.0),
            BoundaryClause(side="left", interval=(y_mouth + half, 1.0), rate=-1.0),
        ),
        precrack=precrack,
        hole=hole,
    )


def builtin(name: str, h: Optional[int] = None) -> Scenario:
    """One of ``example1``, ``example2``, ``example3``."""
    crack1 = Precrack(start=(0.0, 0.5), end=(0.125, 0.5))
    if name == "example1":
        sc = _left_split(0.5, 1.3, name, crack1)
    elif name == "example2":
        crack2 = Precrack(start=(0.0, 0.4), end=(0.125, 0.125 / 2 + 0.4))
        sc = _left_split(0.4, 1.0, name, crack2)
    elif name == "example3":
        sc = _left_split(0.5, 1.6, name, crack1,
                         hole=Hole(center=(0.7, 0.3), radius=0.1))
    else:
        raise ValueError(f"unknown built-in scenario {name!r}")
    if h is not None:
        sc = sc.model_copy(update={"mesh_h": int(h)})
    return sc


BUILTINS = ("example1", "example2", "example3")


def _segment_distance(points: np.ndarray, a, b) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    s = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + s[:, None] * ab), axis=1)


def seed_initial_phase(scenario: Scenario, mesh: Mesh) -> np.ndarray:
    """``v = 0`` on active vertices near the pre-crack segment, 1 elsewhere."""
    v = np.ones(mesh.n_vertices)
    crack = scenario.precrack
    if crack is None:
        return v
    h = mesh.h if mesh.h else scenario.mesh_h
    reach = max(crack.half_width, 1.0 / (2 * h))
    dist = _segment_distance(mesh.vertices, crack.start, crack.end)
    v[(dist <= reach + 1e-12) & mesh.active] = 0.0
    return v


class BoundaryOverlapError(ValueError):
    pass


def dirichlet_at(scenario: Scenario, mesh: Mesh, t: float) -> DirichletData:
    """Evaluate every boundary clause at time ``t``.

    A vertex claimed by two clauses with different ramps is an error; vertices
    claimed by no clause are left free.
    """
    rate_of: dict[int, float] = {}
    for clause in scenario.boundary:
        for vid in select_boundary_vertices(mesh, clause.side, clause.interval):
            vid = int(vid)
            if vid in rate_of and rate_of[vid] != clause.rate:
                x, y = mesh.vertices[vid]
                raise BoundaryOverlapError(
                    f"boundary clauses overlap with different values at vertex "
                    f"{vid} ({x:.6g}, {y:.6g})")
            rate_of[vid] = clause.rate
    idx = np.array(sorted(rate_of), dtype=np.int64)
    vals = np.array([rate_of[i] * t for i in idx], dtype=float)
    return DirichletData(idx, vals)
