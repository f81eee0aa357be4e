"""Discrete Ambrosio-Tortorelli energies and phase-field derivatives.

For nodal fields ``u`` (displacement) and ``v`` (phase)::

    E(u, v)  = 1/2 sum_K (eta + mean_K v^2) |grad u|_K^2 |K|
    D(v)     = kappa*eps int |grad v|^2 + kappa/(4 eps) sum_l m_l (1 - v_l)^2
    P(v; r)  = zeta/2 sum_l m_l [v_l - r_l]_+^2

where ``m_l`` are the lumped vertex weights and ``r`` is the irreversibility
reference.  ``J = E + D`` and the penalized energy is ``J + P``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse import csr_matrix, diags

from .fem import check_field, element_gradient, grad_sq_integral, unit_stiffness
from .mesh import Mesh


class MaterialParams(BaseModel):
    """Length scale, residual stiffness, toughness and penalty constant.

    Defaults are the benchmark values ``eps=0.02, eta=1e-5, kappa=0.5,
    zeta=1e6``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    eps: float = Field(2e-2, gt=0)
    eta: float = Field(1e-5, gt=0)
    kappa: float = Field(0.5, gt=0)
    zeta: float = Field(1e6, ge=0)

    @classmethod
    def normalized(cls, eta: float = 1e-5, zeta: float = 0.0) -> "MaterialParams":
        """``eps = 1/2, kappa = 1``: dissipation reduces to 1/2 int |grad v|^2 + 1/2 int (1-v)^2."""
        return cls(eps=0.5, eta=eta, kappa=1.0, zeta=zeta)

    @property
    def local_scale(self) -> float:
        """``kappa / (4 eps)``, the coefficient of the local dissipation term."""
        return self.kappa / (4.0 * self.eps)


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    dissipation_grad: float
    dissipation_local: float
    penalty: float

    @property
    def dissipation(self) -> float:
        return self.dissipation_grad + self.dissipation_local

    @property
    def total(self) -> float:
        return self.elastic + self.dissipation_grad + self.dissipation_local + self.penalty


def elastic_coefficient(mesh: Mesh, v, p: MaterialParams) -> np.ndarray:
    """Per-triangle ``eta + mean of v^2`` over the triangle's vertices."""
    v = check_field(mesh, v, "v")
    return p.eta + np.mean(v[mesh.triangles] ** 2, axis=1)


def elastic_energy(mesh: Mesh, u, v, p: MaterialParams) -> float:
    gu = element_gradient(mesh, check_field(mesh, u, "u"))
    sq = np.einsum("td,td->t", gu, gu)
    return 0.5 * float(np.sum(elastic_coefficient(mesh, v, p) * sq * mesh.area))


def _dissipation_parts(mesh: Mesh, v, p: MaterialParams):
    v = check_field(mesh, v, "v")
    grad_part = p.kappa * p.eps * grad_sq_integral(mesh, v)
    local_part = p.local_scale * float(mesh.lumped_weight @ (1.0 - v) ** 2)
    return grad_part, local_part


def dissipation_energy(mesh: Mesh, v, p: MaterialParams) -> float:
    g, l = _dissipation_parts(mesh, v, p)
    return g + l


def total_energy(mesh: Mesh, u, v, p: MaterialParams) -> float:
    return elastic_energy(mesh, u, v, p) + dissipation_energy(mesh, v, p)


def penalty_energy(mesh: Mesh, v, v_prev, p: MaterialParams) -> float:
    excess = np.maximum(check_field(mesh, v, "v") - check_field(mesh, v_prev, "v_prev"), 0.0)
    return 0.5 * p.zeta * float(mesh.lumped_weight @ excess ** 2)


def penalized_energy(mesh: Mesh, u, v, v_prev, p: MaterialParams) -> EnergyBreakdown:
    g, l = _dissipation_parts(mesh, v, p)
    return EnergyBreakdown(
        elastic=elastic_energy(mesh, u, v, p),
        dissipation_grad=g,
        dissipation_local=l,
        penalty=penalty_energy(mesh, v, v_prev, p),
    )


def elastic_nodal_weight(mesh: Mesh, u) -> np.ndarray:
    """``a_l = sum_{K containing l} |grad u|_K^2 |K| / 3``."""
    gu = element_gradient(mesh, check_field(mesh, u, "u"))
    per_tri = np.einsum("td,td->t", gu, gu) * mesh.area / 3.0
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(per_tri, 3),
                       minlength=mesh.n_vertices)


def phase_gradient(mesh: Mesh, u, v, v_prev, p: MaterialParams) -> np.ndarray:
    """Derivative of the penalized energy with respect to the nodal values of ``v``."""
    v = check_field(mesh, v, "v")
    v_prev = check_field(mesh, v_prev, "v_prev")
    m = mesh.lumped_weight
    a = elastic_nodal_weight(mesh, u)
    return (a * v
            + 2.0 * p.kappa * p.eps * (unit_stiffness(mesh) @ v)
            - 2.0 * p.local_scale * m * (1.0 - v)
            + p.zeta * m * np.maximum(v - v_prev, 0.0))


def phase_hessian(mesh: Mesh, u, v, v_prev, p: MaterialParams) -> csr_matrix:
    """Generalized Hessian; the penalty kink ``v == v_prev`` counts as inactive."""
    v = check_field(mesh, v, "v")
    v_prev = check_field(mesh, v_prev, "v_prev")
    m = mesh.lumped_weight
    active = v > v_prev
    diag = (elastic_nodal_weight(mesh, u)
            + 2.0 * p.local_scale * m
            + p.zeta * m * active)
    return (2.0 * p.kappa * p.eps * unit_stiffness(mesh) + diags(diag)).tocsr()
