"""Subproblem solvers: linear displacement solve and semismooth Newton phase solve."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csc_matrix, diags
from scipy.sparse.linalg import cg, splu

from .energy import (
    MaterialParams,
    elastic_coefficient,
    penalized_energy,
    phase_gradient,
    phase_hessian,
)
from .fem import assemble_stiffness, check_field
from .mesh import Mesh


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class DirichletData:
    """Constrained vertex indices and their prescribed values."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if idx.shape != vals.shape:
            raise ValueError("indices and values must have equal length")
        if not np.all(np.isfinite(vals)):
            raise ValueError("Dirichlet values must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.indices)

    def extension(self, n: int) -> np.ndarray:
        """Zero extension: prescribed values on constrained vertices, 0 elsewhere."""
        w = np.zeros(n)
        w[self.indices] = self.values
        return w


@dataclass
class SolveReport:
    iterations: int
    final_residual_norm: float
    converged: bool
    method: str = "lu"
    active_set_size: Optional[int] = None
    backtracks: int = 0
    max_directional_derivative: float = -np.inf


def spd_solve(a, b, tol: float = 1e-10, method: str = "lu", maxiter: int = 10_000):
    """Solve ``a x = b`` for sparse SPD ``a``.

    ``method="lu"`` factorizes with SuperLU and refines iteratively until the
    relative residual is below ``tol``; ``"cg"`` runs Jacobi-preconditioned
    conjugate gradients.  Returns ``(x, relative_residual, iterations)``.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    if method == "lu":
        lu = splu(csc_matrix(a), permc_spec="MMD_AT_PLUS_A")
        x = lu.solve(b)
        res = np.linalg.norm(b - a @ x) / bnorm
        it = 1
        while res > tol and it < 5:
            x += lu.solve(b - a @ x)
            res = np.linalg.norm(b - a @ x) / bnorm
            it += 1
    elif method == "cg":
        m_inv = diags(1.0 / a.diagonal())
        count = [0]

        def tick(_):
            count[0] += 1

        x, _ = cg(a, b, rtol=tol, atol=0.0, maxiter=maxiter, M=m_inv, callback=tick)
        res = np.linalg.norm(b - a @ x) / bnorm
        it = count[0]
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"linear solve ({method}) stalled at relative residual {res:.3e}")
    return x, float(res), it


def displacement_system(mesh: Mesh, v, p: MaterialParams):
    return assemble_stiffness(mesh, elastic_coefficient(mesh, v, p))


def solve_displacement(mesh: Mesh, v, bc: DirichletData, p: MaterialParams,
                       tol_lin: float = 1e-10, method: str = "lu"):
    """Minimize the elastic energy over displacements matching ``bc``."""
    v = check_field(mesh, v, "v")
    if len(bc) == 0:
        raise SolverError("empty Dirichlet set: displacement problem is singular")
    if tol_lin <= 0:
        raise ValueError("tol_lin must be positive")
    if not np.all(mesh.active[bc.indices]):
        raise ValueError("Dirichlet vertex is not active")
    a = displacement_system(mesh, v, p)
    fixed = np.zeros(mesh.n_vertices, dtype=bool)
    fixed[bc.indices] = True
    free = np.flatnonzero(mesh.active & ~fixed)

    u = bc.extension(mesh.n_vertices)
    if len(free) == 0:
        return u, SolveReport(0, 0.0, True, method)
    a_ff = a[free][:, free]
    rhs = -(a[free] @ u)
    x, res, it = spd_solve(a_ff, rhs, tol=tol_lin, method=method)
    u[free] = x
    return u, SolveReport(it, res, True, method)


def solve_phase(mesh: Mesh, u, v_prev, p: MaterialParams, tol_v: float = 2e-3,
                max_newton: int = 50, method: str = "lu", line_search: bool = True):
    """Semismooth Newton minimization of the penalized energy in ``v``.

    The penalty reference and the Newton start are both ``v_prev``.  Iteration
    stops once the update and the gradient are both small; the gradient
    threshold is ``tol_v * kappa/(4 eps) * max(m)``.  If a full step raises the
    energy, the step is halved (at most 30 times) until an Armijo condition holds.
    """
    u = check_field(mesh, u, "u")
    v_prev = check_field(mesh, v_prev, "v_prev")
    if tol_v <= 0:
        raise ValueError("tol_v must be positive")
    dofs = mesh.active_indices
    gtol = tol_v * p.local_scale * float(mesh.lumped_weight.max())

    def energy(x):
        return penalized_energy(mesh, u, x, v_prev, p).total

    v = v_prev.copy()
    g = phase_gradient(mesh, u, v, v_prev, p)
    e_old = energy(v)
    report = SolveReport(0, float(np.abs(g[dofs]).max(initial=0.0)), False, method)
    for it in range(1, max_newton + 1):
        hess = phase_hessian(mesh, u, v, v_prev, p)[dofs][:, dofs]
        step_d, _, _ = spd_solve(hess, -g[dofs], tol=1e-12, method=method)
        slope = float(g[dofs] @ step_d)
        if np.any(g[dofs] != 0):
            report.max_directional_derivative = max(report.max_directional_derivative, slope)
            if slope >= 0:
                raise SolverError("Newton direction is not a descent direction")
        step = np.zeros(mesh.n_vertices)
        step[dofs] = step_d
        s = 1.0
        v_new = v + step
        e_new = energy(v_new)
        if line_search and e_new > e_old:
            for _ in range(30):
                s *= 0.5
                v_new = v + s * step
                e_new = energy(v_new)
                report.backtracks += 1
                if e_new <= e_old + 1e-4 * s * slope:
                    break
            else:
                # no decrease is attainable at roundoff level; keep the iterate
                v_new, e_new, s = v, e_old, 0.0
        change = float(np.abs(s * step_d).max(initial=0.0))
        v, e_old = v_new, e_new
        g = phase_gradient(mesh, u, v, v_prev, p)
        gnorm = float(np.abs(g[dofs]).max(initial=0.0))
        report.iterations = it
        report.final_residual_norm = gnorm
        if (change <= tol_v and gnorm <= gtol) or s == 0.0:
            report.converged = gnorm <= gtol
            break
    report.active_set_size = int(np.count_nonzero(v[dofs] > v_prev[dofs]))
    if not np.all(np.isfinite(v)):
        raise SolverError("phase solve produced non-finite values")
    return v, report
