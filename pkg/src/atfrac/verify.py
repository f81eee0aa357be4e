"""Independent oracles and executable invariant suites.

Everything here deliberately avoids the production code paths it checks:
dense KKT solves instead of sparse elimination, projected gradient on the
exact constraint instead of the penalty, finite differences instead of the
analytic derivatives, and per-element affine fits instead of cached gradients.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .energy import (
    MaterialParams,
    penalized_energy,
    phase_gradient,
    phase_hessian,
    total_energy,
)
from .evolution import altmin_step, check_energy_inequality, run_evolution
from .fem import (
    assemble_stiffness,
    interpolate,
    interpolation_error_L1,
    lumped_integral,
    nodal_map,
)
from .mesh import Mesh, build_uniform, carve_hole, check_stiffness_condition
from .scenarios import BoundaryClause, Precrack, Scenario
from .solvers import DirichletData, solve_displacement, solve_phase

MAX_ORACLE_DOFS = 100


@dataclass
class OracleReport:
    name: str
    instances: int
    discrepancy: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.discrepancy) and self.discrepancy <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return (f"[{status}] {self.name}: n={self.instances} "
                f"worst={self.discrepancy:.3e} tol={self.tolerance:.1e}{extra}")


# -- dense building blocks ---------------------------------------------------

def _affine_fit_gradients(mesh: Mesh) -> np.ndarray:
    """Basis gradients per triangle from the 3x3 affine interpolation system."""
    out = np.empty((mesh.n_triangles, 3, 2))
    for t, tri in enumerate(mesh.triangles):
        mat = np.column_stack([np.ones(3), mesh.vertices[tri]])
        coef = np.linalg.inv(mat)          # column i: coefficients of basis i
        out[t] = coef[1:, :].T
    return out


def _dense_operators(mesh: Mesh, coeff: np.ndarray):
    grads = _affine_fit_gradients(mesh)
    n = mesh.n_vertices
    k = np.zeros((n, n))
    area = np.zeros(mesh.n_triangles)
    for t, tri in enumerate(mesh.triangles):
        p = mesh.vertices[tri]
        area[t] = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
        local = area[t] * coeff[t] * grads[t] @ grads[t].T
        for a in range(3):
            for b in range(3):
                k[tri[a], tri[b]] += local[a, b]
    return k, grads, area


def _check_small(mesh: Mesh):
    if mesh.n_active > MAX_ORACLE_DOFS:
        raise ValueError(f"dense oracles support at most {MAX_ORACLE_DOFS} dofs")


def dense_displacement_oracle(mesh: Mesh, v, bc: DirichletData, p: MaterialParams) -> np.ndarray:
    """Minimize the elastic energy under ``bc`` through the full KKT system."""
    _check_small(mesh)
    if len(bc) == 0:
        raise np.linalg.LinAlgError("empty Dirichlet set gives a singular KKT system")
    v = np.asarray(v, dtype=float)
    coeff = np.array([p.eta + np.mean(v[tri] ** 2) for tri in mesh.triangles])
    k, _, _ = _dense_operators(mesh, coeff)
    dofs = mesh.active_indices
    pos = {int(d): i for i, d in enumerate(dofs)}
    na, nc = len(dofs), len(bc)
    kkt = np.zeros((na + nc, na + nc))
    kkt[:na, :na] = k[np.ix_(dofs, dofs)]
    rhs = np.zeros(na + nc)
    for r, (idx, val) in enumerate(zip(bc.indices, bc.values)):
        kkt[na + r, pos[int(idx)]] = 1.0
        kkt[pos[int(idx)], na + r] = 1.0
        rhs[na + r] = val
    sol = np.linalg.solve(kkt, rhs)
    u = np.zeros(mesh.n_vertices)
    u[dofs] = sol[:na]
    return u


def dense_phase_oracle(mesh: Mesh, u, v_prev, p: MaterialParams, tol: float = 1e-10,
                       max_iter: int = 2_000_000) -> np.ndarray:
    """Minimize the unpenalized energy over ``v <= v_prev`` by projected gradient."""
    _check_small(mesh)
    u = np.asarray(u, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    k, grads, area = _dense_operators(mesh, np.ones(mesh.n_triangles))
    n = mesh.n_vertices
    a = np.zeros(n)
    m = np.zeros(n)
    for t, tri in enumerate(mesh.triangles):
        gu = u[tri] @ grads[t]
        a[tri] += (gu @ gu) * area[t] / 3.0
        m[tri] += area[t] / 3.0
    c = p.kappa / (2.0 * p.eps)
    dofs = mesh.active_indices
    hess = (np.diag(a) + 2.0 * p.kappa * p.eps * k + c * np.diag(m))[np.ix_(dofs, dofs)]
    lin = (c * m)[dofs]
    upper = v_prev[dofs]
    step = 1.0 / np.linalg.eigvalsh(hess).max()
    x = np.minimum(upper, 1.0)
    for _ in range(max_iter):
        g = hess @ x - lin
        x_new = np.minimum(x - step * g, upper)
        if np.abs(np.minimum(x - g, upper) - x).max() <= tol:
            break
        x = x_new
    out = v_prev.copy()
    out[dofs] = x
    return out


# -- finite-difference checks ------------------------------------------------

def _kink_mask(v, v_prev, margin):
    return np.abs(np.asarray(v) - np.asarray(v_prev)) > margin


def fd_gradient_check(mesh: Mesh, u, v, v_prev, p: MaterialParams,
                      step: float = 1e-6) -> OracleReport:
    """Central differences of the penalized energy against :func:`phase_gradient`."""
    if not 1e-8 <= step <= 1e-4:
        raise ValueError("step must lie in [1e-8, 1e-4]")
    g = phase_gradient(mesh, u, v, v_prev, p)
    keep = _kink_mask(v, v_prev, 10 * step) & mesh.active
    fd = np.zeros_like(g)
    for l in np.flatnonzero(keep):
        vp, vm = v.copy(), v.copy()
        vp[l] += step
        vm[l] -= step
        fd[l] = (penalized_energy(mesh, u, vp, v_prev, p).total
                 - penalized_energy(mesh, u, vm, v_prev, p).total) / (2 * step)
    scale = max(np.abs(g[keep]).max(initial=0.0), np.finfo(float).tiny)
    err = np.abs(fd[keep] - g[keep]).max(initial=0.0) / scale
    return OracleReport("fd_gradient", 1, err, 1e-6)


def fd_hessian_check(mesh: Mesh, u, v, v_prev, p: MaterialParams, direction,
                     step: float = 1e-6) -> OracleReport:
    """Hessian-vector product against differences of the analytic gradient."""
    d = np.asarray(direction, dtype=float).copy()
    d[~_kink_mask(v, v_prev, 10 * step)] = 0.0
    d[~mesh.active] = 0.0
    hv = phase_hessian(mesh, u, v, v_prev, p) @ d
    fd = (phase_gradient(mesh, u, v + step * d, v_prev, p)
          - phase_gradient(mesh, u, v - step * d, v_prev, p)) / (2 * step)
    scale = max(np.abs(hv).max(initial=0.0), np.finfo(float).tiny)
    return OracleReport("fd_hessian", 1, np.abs(fd - hv).max() / scale, 1e-5)


# -- interpolation rate ------------------------------------------------------

RATE_CASES = {
    "x|s^2": (lambda x, y: x, lambda s: s ** 2),
    "trig|s^2": (lambda x, y: 0.5 + 0.5 * np.sin(np.pi * x) * np.cos(np.pi * y),
                 lambda s: s ** 2),
    "xy|(1-s)^2": (lambda x, y: np.exp(x * y) - 1.0, lambda s: (1.0 - s) ** 2),
}


def loglog_slope(hs: Sequence[int], errors: Sequence[float]) -> float:
    """Slope of ``-log(error)`` against ``log(h)``."""
    return float(np.polyfit(np.log(hs), -np.log(errors), 1)[0])


def rate_study(hs: Sequence[int] = (8, 16, 32, 64), cases: Optional[Iterable[str]] = None
               ) -> List[OracleReport]:
    reports = []
    for name in cases or RATE_CASES:
        f, g = RATE_CASES[name]
        errs = []
        for h in hs:
            mesh = build_uniform(h)
            errs.append(interpolation_error_L1(mesh, interpolate(mesh, f), g))
        slope = loglog_slope(hs, errs)
        reports.append(OracleReport(
            f"rate[{name}]", len(hs), abs(slope - 2.0), 0.1,
            detail=f"slope={slope:.4f} errors=" + ",".join(f"{e:.3e}" for e in errs)))
    return reports


# -- random instances --------------------------------------------------------

def random_state(mesh: Mesh, rng: np.random.Generator, u_scale: float = 1.0):
    """Random displacement, phase and reference phase with values in [0, 1]."""
    n = mesh.n_vertices
    u = u_scale * rng.standard_normal(n)
    v_prev = rng.uniform(0.0, 1.0, n)
    v = rng.uniform(0.0, 1.0, n)
    return u, v, v_prev


def left_right_bc(mesh: Mesh, rng: np.random.Generator) -> DirichletData:
    x = mesh.vertices[:, 0]
    idx = np.flatnonzero(mesh.active & ((x == 0.0) | (x == 1.0)))
    return DirichletData(idx, rng.standard_normal(len(idx)))


# -- suites ------------------------------------------------------------------

def suite_mesh(rng) -> List[OracleReport]:
    out = []
    worst = 0.0
    for h in (1, 2, 4, 16, 64):
        mesh = build_uniform(h)
        worst = max(worst, abs(mesh.lumped_weight.sum() - 1.0),
                    abs(mesh.n_vertices - (h + 1) ** 2), abs(mesh.n_triangles - 2 * h * h),
                    np.abs(mesh.area - 0.5 / h ** 2).max())
    out.append(OracleReport("mesh.counts_and_partition_of_unity", 5, worst, 1e-12))
    carved = carve_hole(build_uniform(64), (0.7, 0.3), 0.1)
    expected = np.pi * 0.01 * 2 * 64 ** 2
    out.append(OracleReport("mesh.hole_removed_fraction", 1,
                            abs(carved.hole_removed - expected) / expected, 0.10,
                            detail=f"removed={carved.hole_removed}"))
    out.append(OracleReport("mesh.carved_partition_of_unity", 1,
                            abs(carved.lumped_weight.sum() - carved.total_area), 1e-12))
    ok = all(check_stiffness_condition(m) for m in (build_uniform(4), carved))
    out.append(OracleReport("mesh.stiffness_condition", 2, 0.0 if ok else 1.0, 0.0))
    k = assemble_stiffness(carved, 1.0)
    out.append(OracleReport("mesh.stiffness_row_sums", 1,
                            float(np.abs(k @ np.ones(carved.n_vertices)).max()), 1e-12))
    return out


def suite_fem(rng) -> List[OracleReport]:
    out = []
    worst = 0.0
    for h in (8, 16, 32):
        mesh = build_uniform(h)
        e = interpolation_error_L1(mesh, interpolate(mesh, lambda x, y: x), np.square)
        worst = max(worst, abs(e * 6 * h * h - 1.0))
    out.append(OracleReport("fem.interp_error_closed_form", 3, worst, 1e-10))
    out += rate_study((8, 16, 32, 64), ["trig|s^2", "xy|(1-s)^2"])
    mesh = build_uniform(8)
    v = interpolate(mesh, lambda x, y: np.sin(3 * x) * y)
    w = nodal_map(v, lambda s: (1 - s) ** 2)
    lumped = lumped_integral(mesh, w)
    # integrate the piecewise-affine interpolant with a degree-1 exact midpoint-edge rule
    tri = mesh.triangles
    mids = (w[tri[:, [0, 1, 2]]] + w[tri[:, [1, 2, 0]]]) / 2.0
    quad = float(np.sum(mids.mean(axis=1) * mesh.area))
    out.append(OracleReport("fem.lumped_exactness", 1, abs(lumped - quad), 1e-12))
    return out


def suite_energy(rng, per_mesh: int = 200) -> List[OracleReport]:
    gw = hw = 0.0
    eig = np.inf
    count = 0
    for h in (2, 3, 4):
        mesh = build_uniform(h)
        for _ in range(per_mesh):
            p = MaterialParams(zeta=10.0 ** rng.uniform(0, 6))
            u, v, v_prev = random_state(mesh, rng)
            gw = max(gw, fd_gradient_check(mesh, u, v, v_prev, p).discrepancy)
            d = rng.standard_normal(mesh.n_vertices)
            hw = max(hw, fd_hessian_check(mesh, u, v, v_prev, p, d).discrepancy)
            if h <= 3:
                hess = phase_hessian(mesh, u, v, v_prev, p).toarray()
                eig = min(eig, np.linalg.eigvalsh(hess).min())
            count += 1
    return [
        OracleReport("energy.fd_gradient", count, gw, 1e-6),
        OracleReport("energy.fd_hessian", count, hw, 1e-5),
        OracleReport("energy.hessian_positive_definite", count, 0.0 if eig > 0 else -eig, 0.0,
                     detail=f"min_eig={eig:.3e}"),
    ]


def suite_solvers(rng, instances: int = 50, trials: int = 100) -> List[OracleReport]:
    out = []
    mesh = build_uniform(2)
    du = dv = 0.0
    for _ in range(instances):
        p = MaterialParams()
        v = rng.uniform(0.0, 1.0, mesh.n_vertices)
        bc = left_right_bc(mesh, rng)
        u, _ = solve_displacement(mesh, v, bc, p)
        du = max(du, np.abs(u - dense_displacement_oracle(mesh, v, bc, p)).max())
        p8 = MaterialParams(zeta=1e8)
        uu, _, v_prev = random_state(mesh, rng)
        vp, _ = solve_phase(mesh, uu, v_prev, p8, tol_v=1e-9)
        dv = max(dv, np.abs(vp - dense_phase_oracle(mesh, uu, v_prev, p8)).max())
    out.append(OracleReport("solvers.displacement_vs_dense_kkt", instances, du, 1e-8))
    out.append(OracleReport("solvers.phase_vs_projected_gradient", instances, dv, 1e-4))
    out.append(maximum_principle_report(rng, trials=trials))
    return out


def maximum_principle_report(rng, hs=(2, 4, 8), trials: int = 100,
                             p: Optional[MaterialParams] = None) -> OracleReport:
    p = p or MaterialParams()
    worst = 0.0
    n = 0
    for h in hs:
        mesh = build_uniform(h)
        for _ in range(trials):
            u, _, v_prev = random_state(mesh, rng, u_scale=10.0 ** rng.uniform(-2, 1))
            v, _ = solve_phase(mesh, u, v_prev, p)
            worst = max(worst, -v.min(), v.max() - 1.0)
            n += 1
    return OracleReport("solvers.maximum_principle", n, max(worst, 0.0), 1e-8)


def small_scenario(h: int = 8, t_end: float = 0.3, tau: float = 0.05) -> Scenario:
    """Coarse split-boundary tearing test used by the evolution checks."""
    return Scenario(
        name="small",
        mesh_h=h,
        tau=tau,
        t_end=t_end,
        boundary=(BoundaryClause(side="left", interval=(0.0, 0.49), rate=2.0),
                  BoundaryClause(side="left", interval=(0.51, 1.0), rate=-2.0)),
        precrack=Precrack(start=(0.0, 0.5), end=(0.25, 0.5)),
    )


def altmin_chain_violation(inner_energies, scale: float) -> float:
    """Worst violation of the alternating descent chain, relative to ``scale``."""
    worst = 0.0
    for chain in inner_energies:
        for j, (mid, end) in enumerate(chain):
            worst = max(worst, end - mid)
            if j > 0:
                worst = max(worst, mid - chain[j - 1][1])
    return worst / scale


def suite_evolution(rng) -> List[OracleReport]:
    sc = small_scenario()
    trace = run_evolution(sc)
    mesh = trace.mesh
    j0 = max(abs(trace.inner_energies[0][0][0]), 1e-300)
    slacks = check_energy_inequality(sc, mesh, trace.fields)
    peak = max(r.total for r in trace.records)
    cl = trace.column("crack_length")
    zero = Scenario(name="zero", mesh_h=4, tau=0.1, t_end=1.0,
                    boundary=(BoundaryClause(side="left", rate=0.0),))
    zt = run_evolution(zero)
    zero_worst = max(max(abs(r.total), abs(r.crack_length)) for r in zt.records)
    return [
        OracleReport("evolution.altmin_descent_chain", len(trace.records),
                     altmin_chain_violation(trace.inner_energies, j0), 1e-12),
        OracleReport("evolution.energy_inequality", len(slacks),
                     max(0.0, -min(slacks)) / peak, 1e-6),
        OracleReport("evolution.crack_length_monotone", len(cl),
                     max(0.0, -np.diff(cl).min(initial=0.0)), 1e-6),
        OracleReport("evolution.zero_load", len(zt.records), zero_worst, 0.0),
    ]


SUITES = {
    "mesh": suite_mesh,
    "fem": suite_fem,
    "energy": suite_energy,
    "solvers": suite_solvers,
    "evolution": suite_evolution,
}


def run_suites(name: str = "all", seed: int = 0,
               echo: Callable[[str], None] = print) -> List[OracleReport]:
    names = list(SUITES) if name == "all" else [name]
    reports = []
    for n in names:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        rep = SUITES[n](rng)
        for r in rep:
            echo(r.line())
        echo(f"-- suite {n}: {sum(r.passed for r in rep)}/{len(rep)} passed "
             f"in {time.perf_counter() - t0:.1f}s")
        reports += rep
    return reports
