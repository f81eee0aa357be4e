import numpy as np
import pytest

from atfrac.energy import MaterialParams, total_energy
from atfrac.fem import interpolate, unit_stiffness
from atfrac.mesh import build_uniform
from atfrac.scenarios import BoundaryClause, Scenario
from atfrac.evolution import altmin_step, check_energy_inequality, crack_length, run_evolution
from atfrac.solvers import DirichletData
from atfrac.verify import altmin_chain_violation, left_right_bc, small_scenario

P = MaterialParams()


def test_crack_length_examples():
    m = build_uniform(8)
    n = m.n_vertices
    assert crack_length(m, np.ones(n), P) == 0.0
    assert crack_length(m, np.zeros(n), P) == pytest.approx(50.0, rel=1e-14)


def test_crack_length_of_optimal_profile():
    m = build_uniform(200)
    v = interpolate(m, lambda x, y: 1 - np.exp(-np.abs(y - 0.5) / (2 * P.eps)))
    # (1/eps) * int exp(-|s|/(2 eps)) ds = 4 for a crack of unit length
    assert crack_length(m, v, P) == pytest.approx(4.0, rel=1e-2)


def test_altmin_unloaded():
    m = build_uniform(4)
    n = m.n_vertices
    bc = DirichletData(np.flatnonzero(m.vertices[:, 0] == 0), np.zeros(5))
    res = altmin_step(m, np.zeros(n), np.ones(n), bc, P)
    assert res.outer_iterations == 1 and res.converged
    np.testing.assert_allclose(res.u, 0.0, atol=1e-14)
    np.testing.assert_allclose(res.v, 1.0, atol=1e-12)


def test_altmin_restart_from_converged_state(rng):
    m = build_uniform(6)
    n = m.n_vertices
    bc = left_right_bc(m, rng)
    first = altmin_step(m, np.zeros(n), np.ones(n), bc, P, max_outer=200)
    assert first.converged
    again = altmin_step(m, first.u, first.v, bc, P)
    assert again.outer_iterations == 1
    assert np.abs(again.v - first.v).max() <= 2e-3


def test_altmin_descent_chain(rng):
    m = build_uniform(2)
    for _ in range(10):
        bc = left_right_bc(m, rng)
        res = altmin_step(m, np.zeros(9), rng.uniform(0, 1, 9), bc, P)
        scale = abs(res.energies[0][0])
        assert altmin_chain_violation([res.energies], scale) <= 1e-12


def test_zero_load_run():
    sc = Scenario(mesh_h=4, tau=0.1, t_end=1.0, boundary=(BoundaryClause(side="left", rate=0.0),))
    tr = run_evolution(sc)
    assert len(tr.records) == 10
    for r in tr.records:
        assert (r.elastic, r.dissipation, r.penalty, r.crack_length) == (0, 0, 0, 0)
    assert all(s == 0 for s in check_energy_inequality(sc, tr.mesh, tr.fields))


@pytest.fixture(scope="module")
def small_trace():
    sc = small_scenario()
    return sc, run_evolution(sc)


def test_small_run_invariants(small_trace):
    sc, tr = small_trace
    m = tr.mesh
    assert not tr.failed and len(tr.records) == sc.n_steps
    for (t0, u0, v0), (t1, u1, v1) in zip(tr.fields[:-1], tr.fields[1:]):
        assert v1.min() >= -1e-8 and v1.max() <= 1 + 1e-8
    j0 = abs(tr.inner_energies[0][0][0])
    assert altmin_chain_violation(tr.inner_energies, j0) <= 1e-12
    assert np.all(np.diff(tr.column("crack_length")) >= -1e-6)
    assert tr.column("crack_length")[-1] > tr.column("crack_length")[0]


def test_irreversibility_bound(small_trace):
    # stationarity at a penalized node: zeta m_l d_l <= kappa/(2 eps) m_l + 2 kappa eps K_ll,
    # since the elastic term only pulls v down; one such bound per inner phase solve
    sc, tr = small_trace
    p, m = sc.params, tr.mesh
    k_over_m = (unit_stiffness(m).diagonal() / m.lumped_weight).max()
    per_solve = (p.kappa / (2 * p.eps) + 2 * p.kappa * p.eps * k_over_m) / p.zeta
    for rec in tr.records:
        assert rec.irrev_violation <= rec.altmin_iters * per_solve * (1 + 1e-6)


def test_offline_slack_matches_online(small_trace):
    sc, tr = small_trace
    off = check_energy_inequality(sc, tr.mesh, tr.fields)
    on = tr.column("energy_slack")
    peak = tr.column("total").max()
    np.testing.assert_allclose(off, on, atol=1e-12 * peak)
    assert min(off) >= -1e-6 * peak


def test_record_totals(small_trace):
    sc, tr = small_trace
    for r, (_, u, v) in zip(tr.records, tr.fields[1:]):
        assert r.total == pytest.approx(r.elastic + r.dissipation + r.penalty, rel=1e-14)
        assert r.elastic + r.dissipation == pytest.approx(total_energy(tr.mesh, u, v, sc.params),
                                                          rel=1e-13)


def test_deterministic_runs(small_trace):
    sc, tr = small_trace
    again = run_evolution(sc)
    for a, b in zip(tr.records, again.records):
        assert a == b


def test_missing_boundary_fails_cleanly():
    tr = run_evolution(Scenario(mesh_h=4, tau=0.1, t_end=0.3))
    assert tr.failed and "Dirichlet" in tr.error
    assert tr.records == []


def test_break_detection_and_stop():
    sc = small_scenario(h=8, t_end=3.0, tau=0.1)
    tr = run_evolution(sc)
    if tr.break_time is not None:
        el = tr.column("elastic")
        assert el[-1] < 0.05 * el.max()
        assert tr.records[-1].time == pytest.approx(tr.break_time + 2 * sc.tau)
    keep = sc.model_copy(update={"output": sc.output.model_copy(update={"stop_when_broken": False})})
    full = run_evolution(keep)
    assert len(full.records) == keep.n_steps
