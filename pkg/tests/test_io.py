import json

import numpy as np
import pytest

from atfrac.evolution import StepRecord, run_evolution
from atfrac.io import (
    FIELDS_NAME,
    LOCK_NAME,
    MANIFEST_NAME,
    TRACE_NAME,
    RunDirectoryBusy,
    file_checksum,
    load_fields,
    read_snapshot,
    read_trace,
    run_directory_lock,
    run_to_directory,
    write_snapshot,
    write_trace,
)
from atfrac.mesh import build_uniform, carve_hole
from atfrac.scenarios import BoundaryClause, Scenario
from atfrac.verify import small_scenario


def test_trace_round_trip(tmp_path):
    recs = [StepRecord(i, 0.1 * i, 2, 7, 1 / 3, 2e-17, 0.0, 1 / 3 + 2e-17, np.pi, 1e-5, -0.0)
            for i in range(1, 4)]
    write_trace(recs, tmp_path / "t.csv")
    assert read_trace(tmp_path / "t.csv") == recs
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header.split(",") == StepRecord.columns()


def test_trace_header_checked(tmp_path):
    (tmp_path / "t.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trace(tmp_path / "t.csv")


def test_zero_load_trace(tmp_path):
    sc = Scenario(mesh_h=4, tau=0.1, t_end=0.3, boundary=(BoundaryClause(side="left", rate=0.0),))
    run_to_directory(sc, tmp_path)
    recs = read_trace(tmp_path / TRACE_NAME)
    assert [r.step for r in recs] == [1, 2, 3]
    assert all(r.total == 0 for r in recs)


def test_snapshot_intact(tmp_path):
    m = build_uniform(3)
    write_snapshot(m, np.zeros(16), np.ones(16), 0.0, tmp_path / "s.vtk")
    text = (tmp_path / "s.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    snap = read_snapshot(tmp_path / "s.vtk")
    assert len(snap["points"]) == 16 and np.all(snap["phase"] == 1)
    assert np.all(snap["cell_types"] == 5) and len(snap["cells"]) == 18


def test_snapshot_carved(tmp_path):
    m = carve_hole(build_uniform(16), (0.5, 0.5), 0.2)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(m.n_vertices)
    write_snapshot(m, u, np.ones(m.n_vertices), 0.5, tmp_path / "s.vtk")
    snap = read_snapshot(tmp_path / "s.vtk")
    assert len(snap["points"]) == m.n_active
    assert len(snap["cells"]) == m.n_triangles
    assert snap["cells"].max() < m.n_active
    np.testing.assert_array_equal(snap["displacement"], u[m.active])


def test_run_directory_contents(tmp_path):
    sc = small_scenario()
    trace = run_to_directory(sc, tmp_path, snapshot_every=2)
    man = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert man["trace_sha256"] == file_checksum(tmp_path / TRACE_NAME)
    assert man["fingerprint"] == sc.fingerprint()
    assert man["steps"] == len(trace.records)
    assert [s["step"] for s in man["snapshots"]] == [2, 4, 6]
    for s in man["snapshots"]:
        assert (tmp_path / s["file"]).exists()
    fields = load_fields(tmp_path / FIELDS_NAME)
    assert len(fields) == len(trace.records) + 1
    np.testing.assert_array_equal(fields[-1][2], trace.fields[-1][2])
    assert not (tmp_path / LOCK_NAME).exists()


def test_trace_bytes_reproducible(tmp_path):
    sc = small_scenario()
    run_to_directory(sc, tmp_path / "a")
    run_to_directory(sc, tmp_path / "b")
    assert (tmp_path / "a" / TRACE_NAME).read_bytes() == (tmp_path / "b" / TRACE_NAME).read_bytes()


def test_lock_prevents_second_writer(tmp_path):
    with run_directory_lock(tmp_path):
        with pytest.raises(RunDirectoryBusy):
            run_to_directory(small_scenario(), tmp_path)
    assert not (tmp_path / LOCK_NAME).exists()
