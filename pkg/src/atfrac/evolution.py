"""Alternating minimization and the quasi-static time-stepping driver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Callable, List, Optional

import numpy as np

from .energy import (
    MaterialParams,
    dissipation_energy,
    elastic_coefficient,
    elastic_energy,
    penalty_energy,
    total_energy,
)
from .fem import assemble_stiffness, lumped_integral
from .mesh import Mesh
from .scenarios import Scenario, dirichlet_at, seed_initial_phase
from .solvers import DirichletData, SolverError, solve_displacement, solve_phase

log = logging.getLogger(__name__)


@dataclass
class StepRecord:
    step: int
    time: float
    altmin_iters: int
    newton_iters: int
    elastic: float
    dissipation: float
    penalty: float
    total: float
    crack_length: float
    irrev_violation: float
    energy_slack: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]


@dataclass
class AltMinResult:
    u: np.ndarray
    v: np.ndarray
    outer_iterations: int
    newton_iterations: int
    converged: bool
    # per outer iteration j: (J(u_j, v_{j-1}), J(u_j, v_j))
    energies: List[tuple] = field(default_factory=list)
    newton_converged: bool = True


@dataclass
class EvolutionTrace:
    records: List[StepRecord]
    fingerprint: str
    mesh: Optional[Mesh] = None
    # (t, u, v) for t_0 and every completed step
    fields: List[tuple] = field(default_factory=list)
    capped_steps: List[int] = field(default_factory=list)
    inner_energies: List[List[tuple]] = field(default_factory=list)
    break_time: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def crack_length(mesh: Mesh, v, p: MaterialParams) -> float:
    """Crack-length proxy ``(1/eps) int (1 - v)``."""
    return lumped_integral(mesh, 1.0 - np.asarray(v, dtype=float)) / p.eps


def altmin_step(mesh: Mesh, u_init, v_init, bc: DirichletData, p: MaterialParams,
                tol_v: float = 2e-3, max_outer: int = 10, tol_lin: float = 1e-10,
                max_newton: int = 50, linear_solver: str = "lu") -> AltMinResult:
    """Alternate displacement and phase minimizations at a fixed boundary datum.

    Each phase solve penalizes increases over the previous inner iterate.
    """
    dofs = mesh.active_indices
    v_old = np.asarray(v_init, dtype=float).copy()
    u = np.asarray(u_init, dtype=float).copy()
    newton_total = 0
    newton_ok = True
    energies = []
    j = 0
    while True:
        j += 1
        u, _ = solve_displacement(mesh, v_old, bc, p, tol_lin=tol_lin, method=linear_solver)
        e_mid = total_energy(mesh, u, v_old, p)
        v, rep = solve_phase(mesh, u, v_old, p, tol_v=tol_v, max_newton=max_newton,
                             method=linear_solver)
        newton_total += rep.iterations
        newton_ok &= rep.converged
        energies.append((e_mid, total_energy(mesh, u, v, p)))
        change = float(np.abs(v[dofs] - v_old[dofs]).max(initial=0.0))
        v_old = v
        if change <= tol_v:
            return AltMinResult(u, v, j, newton_total, True, energies, newton_ok)
        if j >= max_outer:
            return AltMinResult(u, v, j, newton_total, False, energies, newton_ok)


def step_rhs(mesh: Mesh, u_prev, v_prev, w_prev, w_next, p: MaterialParams) -> float:
    """Energy of the admissible competitor ``u_prev + (w_next - w_prev)`` at ``v_prev``.

    Expands to ``J(u_prev, v_prev)`` plus the boundary work and the quadratic
    rest term of the load increment.
    """
    dw = np.asarray(w_next) - np.asarray(w_prev)
    a = assemble_stiffness(mesh, elastic_coefficient(mesh, v_prev, p))
    work = float(u_prev @ (a @ dw))
    rest = 0.5 * float(dw @ (a @ dw))
    return total_energy(mesh, u_prev, v_prev, p) + work + rest


def check_energy_inequality(scenario: Scenario, mesh: Mesh, fields_: List[tuple]) -> List[float]:
    """Per-step slack ``RHS_i - J(u_i, v_i)`` from a stored field history.

    ``fields_`` holds ``(t, u, v)`` for ``t_0`` and every step.  The boundary
    datum is extended by zero into the interior, so the values depend on that
    choice of extension.
    """
    if len(fields_) < 1:
        raise ValueError("missing field snapshots")
    p = scenario.params
    slacks = []
    for (t0, u0, v0), (t1, u1, v1) in zip(fields_[:-1], fields_[1:]):
        w0 = dirichlet_at(scenario, mesh, t0).extension(mesh.n_vertices)
        w1 = dirichlet_at(scenario, mesh, t1).extension(mesh.n_vertices)
        rhs = step_rhs(mesh, u0, v0, w0, w1, p)
        slacks.append(rhs - total_energy(mesh, u1, v1, p))
    return slacks


def run_evolution(scenario: Scenario, mesh: Optional[Mesh] = None,
                  keep_fields: bool = True,
                  on_step: Optional[Callable] = None) -> EvolutionTrace:
    """Quasi-static evolution on ``t_i = i * tau`` for ``i = 1..n_steps``.

    ``on_step(record, u, v)`` is called after every completed step.  With
    ``scenario.output.stop_when_broken`` the run ends once the elastic energy
    has stayed below ``break_fraction`` of its running peak for
    ``break_steps`` consecutive steps; ``break_time`` is the first of them.
    """
    mesh = mesh if mesh is not None else scenario.build_mesh()
    p, tol, out = scenario.params, scenario.tolerances, scenario.output
    trace = EvolutionTrace(records=[], fingerprint=scenario.fingerprint(), mesh=mesh)
    n = mesh.n_vertices

    v = seed_initial_phase(scenario, mesh)
    bc = dirichlet_at(scenario, mesh, 0.0)
    if len(bc):
        u, _ = solve_displacement(mesh, v, bc, p, tol_lin=tol.tol_lin,
                                  method=tol.linear_solver)
    else:
        u = np.zeros(n)
    w = bc.extension(n)
    if keep_fields:
        trace.fields.append((0.0, u.copy(), v.copy()))

    dofs = mesh.active_indices
    peak = 0.0
    below = 0
    for i, t in enumerate(scenario.times(), start=1):
        t = float(t)
        bc = dirichlet_at(scenario, mesh, t)
        w_next = bc.extension(n)
        try:
            if len(bc) == 0:
                raise SolverError("no Dirichlet vertices: displacement problem is singular")
            res = altmin_step(mesh, u, v, bc, p, tol_v=tol.tol_v, max_outer=tol.max_outer,
                              tol_lin=tol.tol_lin, max_newton=tol.max_newton,
                              linear_solver=tol.linear_solver)
        except (SolverError, np.linalg.LinAlgError) as exc:
            log.error("step %d (t=%g) failed: %s", i, t, exc)
            trace.failed = True
            trace.error = f"step {i}: {exc}"
            break
        if not res.converged:
            trace.capped_steps.append(i)
        rhs = step_rhs(mesh, u, v, w, w_next, p)
        el = elastic_energy(mesh, res.u, res.v, p)
        di = dissipation_energy(mesh, res.v, p)
        pe = penalty_energy(mesh, res.v, v, p)
        rec = StepRecord(
            step=i,
            time=t,
            altmin_iters=res.outer_iterations,
            newton_iters=res.newton_iterations,
            elastic=el,
            dissipation=di,
            penalty=pe,
            total=el + di + pe,
            crack_length=crack_length(mesh, res.v, p),
            irrev_violation=float(np.maximum(res.v[dofs] - v[dofs], 0.0).max(initial=0.0)),
            energy_slack=rhs - (el + di),
        )
        trace.records.append(rec)
        trace.inner_energies.append(res.energies)
        u, v, w = res.u, res.v, w_next
        if keep_fields:
            trace.fields.append((t, u.copy(), v.copy()))
        if on_step is not None:
            on_step(rec, u, v)
        log.debug("t=%.3f altmin=%d newton=%d elastic=%.4e crack=%.4f",
                  t, rec.altmin_iters, rec.newton_iters, el, rec.crack_length)

        peak = max(peak, el)
        below = below + 1 if el < out.break_fraction * peak else 0
        if below >= out.break_steps and trace.break_time is None:
            trace.break_time = trace.records[-out.break_steps].time
            if out.stop_when_broken:
                break
    return trace
