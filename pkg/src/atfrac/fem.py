"""P1 function space on a :class:`~atfrac.mesh.Mesh`.

Nodal fields are plain float arrays with one entry per mesh vertex.  Values at
inactive (carved) vertices are carried along but never enter an integral.
Sparse operators are ``scipy.sparse.csr_matrix`` over the full vertex index
space; rows and columns of inactive vertices are empty.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .mesh import Mesh


def check_field(mesh: Mesh, v, name: str = "field") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise ValueError(
            f"{name} has shape {v.shape}, mesh has {mesh.n_vertices} vertices")
    return v


def interpolate(mesh: Mesh, f: Callable) -> np.ndarray:
    """Lagrange interpolant: sample ``f(x, y)`` at every active vertex.

    ``f`` is called once with coordinate arrays; scalar results broadcast.
    """
    idx = mesh.active_indices
    x, y = mesh.vertices[idx, 0], mesh.vertices[idx, 1]
    vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
    out = np.zeros(mesh.n_vertices)
    out[idx] = vals
    return out


def nodal_map(v, g: Callable) -> np.ndarray:
    """Nodal values of the interpolant of ``g(v)``."""
    v = np.asarray(v, dtype=float)
    return np.broadcast_to(np.asarray(g(v), dtype=float), v.shape).copy()


def element_gradient(mesh: Mesh, v) -> np.ndarray:
    """Constant gradient of ``v`` on each triangle, shape (T, 2)."""
    v = check_field(mesh, v)
    return np.einsum("ti,tid->td", v[mesh.triangles], mesh.grads)


def lumped_integral(mesh: Mesh, w) -> float:
    """Integral of the piecewise-affine interpolant with nodal values ``w``."""
    w = check_field(mesh, w)
    return float(w @ mesh.lumped_weight)


def grad_sq_integral(mesh: Mesh, v) -> float:
    g = element_gradient(mesh, v)
    return float(np.sum(mesh.area * np.einsum("td,td->t", g, g)))


def assemble_stiffness(mesh: Mesh, coeff=1.0) -> csr_matrix:
    """Weighted stiffness matrix ``A_lm = sum_K coeff_K int_K grad xi_l . grad xi_m``."""
    coeff = np.broadcast_to(np.asarray(coeff, dtype=float), (mesh.n_triangles,))
    if np.any(coeff < 0):
        raise ValueError("stiffness coefficient must be non-negative")
    local = np.einsum("tid,tjd->tij", mesh.grads, mesh.grads)
    local *= (coeff * mesh.area)[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    a = coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    # element matrices are symmetric, but accumulated roundoff need not be
    return ((a + a.T) * 0.5).tocsr()


def unit_stiffness(mesh: Mesh) -> csr_matrix:
    """Cached unit-coefficient stiffness matrix."""
    k = mesh._cache.get("unit_stiffness")
    if k is None:
        k = assemble_stiffness(mesh, 1.0)
        mesh._cache["unit_stiffness"] = k
    return k


def _reference_rule(order: int, subdivisions: int):
    """Collapsed Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    Returns barycentric points (Q, 3) and weights summing to 1.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    px = s.ravel()
    py = (t * (1.0 - s)).ravel()
    pw = (ws * wt * (1.0 - s)).ravel()
    pts = np.column_stack([px, py])
    # uniform red refinement of the reference triangle
    tris = [np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])]
    for _ in range(subdivisions):
        nxt = []
        for a, b, c in tris:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array(q) for q in ([a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab])]
        tris = nxt
    all_pts, all_w = [], []
    for a, b, c in tris:
        jac = abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
        all_pts.append(a + pts[:, :1] * (b - a) + pts[:, 1:] * (c - a))
        all_w.append(pw * jac)
    pts = np.vstack(all_pts)
    weights = np.concatenate(all_w) * 2.0
    bary = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    return bary, weights


def interpolation_error_L1(mesh: Mesh, v, g: Callable, order: int = 8,
                           subdivisions: int = 0) -> float:
    """``int |g(v) - P_h(g(v))| dx`` by per-triangle Gauss quadrature.

    With ``v`` affine on a triangle the integrand is smooth wherever it does
    not change sign; for ``g`` with constant-sign second derivative the rule is
    exact up to roundoff for polynomial ``g`` of degree < 2 * order.
    """
    v = check_field(mesh, v)
    bary, weights = _reference_rule(order, subdivisions)
    vt = v[mesh.triangles]                          # (T, 3)
    gt = np.asarray(g(vt), dtype=float)             # nodal values of g(v)
    at_q = vt @ bary.T                              # (T, Q)
    diff = np.asarray(g(at_q), dtype=float) - gt @ bary.T
    return float(np.sum(np.abs(diff) @ weights * mesh.area))
