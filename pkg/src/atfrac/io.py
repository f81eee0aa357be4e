"""Run persistence: trace CSV, legacy VTK snapshots, field history, manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .evolution import EvolutionTrace, StepRecord, run_evolution
from .mesh import Mesh
from .scenarios import Scenario, dirichlet_at

TRACE_NAME = "trace.csv"
FIELDS_NAME = "fields.npz"
MANIFEST_NAME = "manifest.json"
SCENARIO_NAME = "scenario.json"
LOCK_NAME = ".lock"


class RunDirectoryBusy(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_trace(records: List[StepRecord], path) -> Path:
    path = Path(path)
    cols = StepRecord.columns()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in cols])
    return path


def read_trace(path) -> List[StepRecord]:
    ints = {"step", "altmin_iters", "newton_iters"}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != StepRecord.columns():
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        for row in reader:
            out.append(StepRecord(**{k: int(v) if k in ints else float(v)
                                     for k, v in row.items()}))
    return out


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_snapshot(mesh: Mesh, u, v, t: float, path) -> Path:
    """Legacy ASCII VTK unstructured grid of the active part of the mesh."""
    path = Path(path)
    idx = mesh.active_indices
    renum = np.full(mesh.n_vertices, -1, dtype=np.int64)
    renum[idx] = np.arange(len(idx))
    tris = renum[mesh.triangles]
    lines = [
        "# vtk DataFile Version 3.0",
        f"phase-field fracture t={_fmt(t)}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(idx)} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices[idx]]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    lines.append(f"POINT_DATA {len(idx)}")
    for name, arr in (("displacement", u), ("phase", v)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(x) for x in np.asarray(arr)[idx]]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_snapshot(path) -> dict:
    """Minimal reader for files produced by :func:`write_snapshot`."""
    tokens = Path(path).read_text().split("\n")
    if tokens[0] != "# vtk DataFile Version 3.0" or tokens[3] != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("not a legacy VTK unstructured grid")
    out: dict = {}
    i = 4
    while i < len(tokens):
        parts = tokens[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([list(map(float, l.split())) for l in tokens[i + 1:i + 1 + n]])
            i += n + 1
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([list(map(int, l.split()))[1:] for l in tokens[i + 1:i + 1 + n]])
            i += n + 1
        elif parts[0] == "CELL_TYPES":
            n = int(parts[1])
            out["cell_types"] = np.array([int(l) for l in tokens[i + 1:i + 1 + n]])
            i += n + 1
        elif parts[0] == "POINT_DATA":
            out["n_point_data"] = int(parts[1])
            i += 1
        elif parts[0] == "SCALARS":
            n = out["n_point_data"]
            out[parts[1]] = np.array([float(l) for l in tokens[i + 2:i + 2 + n]])
            i += n + 2
        else:
            i += 1
    return out


def save_fields(trace: EvolutionTrace, path) -> Path:
    ts = np.array([f[0] for f in trace.fields])
    us = np.array([f[1] for f in trace.fields])
    vs = np.array([f[2] for f in trace.fields])
    np.savez_compressed(path, t=ts, u=us, v=vs)
    return Path(path)


def load_fields(path) -> List[tuple]:
    with np.load(path) as data:
        return [(float(t), u, v) for t, u, v in zip(data["t"], data["u"], data["v"])]


@contextmanager
def run_directory_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunDirectoryBusy(f"{out_dir} is in use by another run ({lock} exists)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def run_to_directory(scenario: Scenario, out_dir, snapshot_every: Optional[int] = None):
    """Run ``scenario`` and write trace, fields, snapshots and manifest to ``out_dir``."""
    out_dir = Path(out_dir)
    every = scenario.output.snapshot_every if snapshot_every is None else snapshot_every
    mesh = scenario.build_mesh()
    # surface clause overlaps before any work is done
    dirichlet_at(scenario, mesh, scenario.t_end)
    snapshots = []
    with run_directory_lock(out_dir):
        (out_dir / SCENARIO_NAME).write_text(scenario.to_json())
        started = time.time()

        def on_step(rec, u, v):
            if every and rec.step % every == 0:
                name = f"snap_{rec.step:06d}.vtk"
                write_snapshot(mesh, u, v, rec.time, out_dir / name)
                snapshots.append({"step": rec.step, "time": rec.time, "file": name})

        trace = run_evolution(scenario, mesh=mesh, on_step=on_step)
        write_trace(trace.records, out_dir / TRACE_NAME)
        save_fields(trace, out_dir / FIELDS_NAME)
        manifest = {
            "config": json.loads(scenario.to_json()),
            "fingerprint": trace.fingerprint,
            "mesh": mesh.summary(),
            "code_version": __version__,
            "start_time": started,
            "end_time": time.time(),
            "steps": len(trace.records),
            "break_time": trace.break_time,
            "capped_steps": trace.capped_steps,
            "failed": trace.failed,
            "error": trace.error,
            "snapshots": snapshots,
            "precrack_realization": "phase seeding (v=0 band)",
            "trace_sha256": file_checksum(out_dir / TRACE_NAME),
        }
        (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return trace
