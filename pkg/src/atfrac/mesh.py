"""Structured right-triangle meshes of the unit square.

Vertices are enumerated row-major: vertex ``(k/h, j/h)`` has index
``j * (h + 1) + k``.  Each grid cell contributes a lower-left triangle
(orientation ``+1``) followed by an upper-right triangle (orientation ``-1``),
both split along the anti-diagonal of the cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

SIDES = ("left", "right", "bottom", "top")

# tolerance for "lies on the side x == 0" style coordinate tests
_COORD_TOL = 1e-12


class MeshError(ValueError):
    pass


@dataclass(eq=False)
class Mesh:
    """Triangulation with cached per-triangle geometry.

    Attributes
    ----------
    h : int or None
        Number of subdivisions per side (``None`` for hand-built meshes).
    vertices : (N, 2) array
    triangles : (T, 3) int array, counterclockwise vertex order
    orientation : (T,) int array, +1 for lower-left and -1 for upper-right cells
    active : (N,) bool array, False for vertices without incident triangles
    boundary_tag : (N,) str array
    lumped_weight : (N,) array, integral of each nodal basis function
    area : (T,) array
    grads : (T, 3, 2) array, constant basis gradients per triangle
    """

    h: Optional[int]
    vertices: np.ndarray
    triangles: np.ndarray
    orientation: np.ndarray
    active: np.ndarray
    boundary_tag: np.ndarray
    lumped_weight: np.ndarray
    area: np.ndarray
    grads: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    @property
    def total_area(self) -> float:
        return float(self.area.sum())

    @property
    def hole_removed(self) -> int:
        """Number of triangles removed by carving (0 for uncarved meshes)."""
        return self._cache.get("removed", 0)

    def summary(self) -> dict:
        return {
            "h": self.h,
            "vertices": self.n_vertices,
            "active_vertices": self.n_active,
            "triangles": self.n_triangles,
            "area": self.total_area,
        }

    @classmethod
    def from_arrays(cls, vertices, triangles, h: Optional[int] = None,
                    orientation=None) -> "Mesh":
        """Build a mesh from raw arrays; triangles are reoriented counterclockwise."""
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        area2 = _signed_area2(vertices, triangles)
        flip = area2 < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        if orientation is None:
            orientation = np.zeros(len(triangles), dtype=np.int8)
        area, grads = _geometry(vertices, triangles)
        if np.any(area <= 0):
            raise MeshError("degenerate triangle in mesh")
        active = np.zeros(len(vertices), dtype=bool)
        active[triangles.ravel()] = True
        mesh = cls(
            h=h,
            vertices=vertices,
            triangles=triangles,
            orientation=np.asarray(orientation, dtype=np.int8),
            active=active,
            boundary_tag=_side_tags(vertices, active),
            lumped_weight=_lumped_weights(len(vertices), triangles, area),
            area=area,
            grads=grads,
        )
        return mesh


def _signed_area2(vertices, triangles):
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    return ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
            - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _geometry(vertices, triangles):
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    area2 = _signed_area2(vertices, triangles)
    grads = np.empty((len(triangles), 3, 2))
    grads[:, 0, 0] = p1[:, 1] - p2[:, 1]
    grads[:, 0, 1] = p2[:, 0] - p1[:, 0]
    grads[:, 1, 0] = p2[:, 1] - p0[:, 1]
    grads[:, 1, 1] = p0[:, 0] - p2[:, 0]
    grads[:, 2, 0] = p0[:, 1] - p1[:, 1]
    grads[:, 2, 1] = p1[:, 0] - p0[:, 0]
    grads /= area2[:, None, None]
    return 0.5 * area2, grads


def _lumped_weights(n, triangles, area):
    return np.bincount(triangles.ravel(), weights=np.repeat(area / 3.0, 3),
                       minlength=n)


def _side_tags(vertices, active):
    x, y = vertices[:, 0], vertices[:, 1]
    tags = np.full(len(vertices), "interior", dtype=object)
    # first matching side wins at corners; select_boundary_vertices uses coordinates
    for name, mask in reversed([
        ("left", np.abs(x) < _COORD_TOL),
        ("right", np.abs(x - 1.0) < _COORD_TOL),
        ("bottom", np.abs(y) < _COORD_TOL),
        ("top", np.abs(y - 1.0) < _COORD_TOL),
    ]):
        tags[mask] = name
    tags[~active] = "inactive"
    return tags


def build_uniform(h: int) -> Mesh:
    """Uniform triangulation of the unit square with ``h`` cells per side."""
    if int(h) != h or h < 1:
        raise MeshError(f"subdivision count must be a positive integer, got {h!r}")
    h = int(h)
    n1 = h + 1
    ks, js = np.meshgrid(np.arange(n1), np.arange(n1))
    vertices = np.column_stack([ks.ravel() / h, js.ravel() / h])

    jj, kk = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    ll = (jj * n1 + kk).ravel()          # lower-left corner of each cell
    lr, ul, ur = ll + 1, ll + n1, ll + n1 + 1
    tris = np.empty((2 * h * h, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([ll, lr, ul])
    tris[1::2] = np.column_stack([lr, ur, ul])
    orientation = np.tile(np.array([1, -1], dtype=np.int8), h * h)
    return Mesh.from_arrays(vertices, tris, h=h, orientation=orientation)


def carve_hole(mesh: Mesh, center: Sequence[float], radius: float) -> Mesh:
    """Remove every triangle whose barycenter lies strictly inside the disk."""
    cx, cy = map(float, center)
    radius = float(radius)
    if radius < 0:
        raise MeshError("hole radius must be non-negative")
    if radius == 0:
        return mesh
    if not (0 < cx - radius and cx + radius < 1 and 0 < cy - radius and cy + radius < 1):
        raise MeshError("hole must lie strictly inside the unit square")

    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    inside = (bary[:, 0] - cx) ** 2 + (bary[:, 1] - cy) ** 2 < radius ** 2
    if not inside.any():
        return mesh
    keep = ~inside
    triangles = mesh.triangles[keep]
    if not _is_connected(triangles, mesh.n_vertices):
        raise MeshError("hole disconnects the domain")

    area, grads = mesh.area[keep], mesh.grads[keep]
    active = np.zeros(mesh.n_vertices, dtype=bool)
    active[triangles.ravel()] = True
    tags = _side_tags(mesh.vertices, active)
    removed_touch = np.zeros(mesh.n_vertices, dtype=bool)
    removed_touch[mesh.triangles[inside].ravel()] = True
    tags[removed_touch & active] = "hole"

    carved = replace(
        mesh,
        triangles=triangles,
        orientation=mesh.orientation[keep],
        active=active,
        boundary_tag=tags,
        lumped_weight=_lumped_weights(mesh.n_vertices, triangles, area),
        area=area,
        grads=grads,
        _cache={"removed": int(inside.sum())},
    )
    return carved


def _is_connected(triangles, n_vertices) -> bool:
    """Connectivity of the triangle graph where neighbours share an edge."""
    nt = len(triangles)
    if nt == 0:
        return False
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                            triangles[:, [2, 0]]])
    edges.sort(axis=1)
    key = edges[:, 0] * n_vertices + edges[:, 1]
    owner = np.tile(np.arange(nt), 3)
    order = np.argsort(key, kind="stable")
    key, owner = key[order], owner[order]
    shared = key[1:] == key[:-1]
    a, b = owner[:-1][shared], owner[1:][shared]
    adj = coo_matrix((np.ones(len(a)), (a, b)), shape=(nt, nt))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


def select_boundary_vertices(mesh: Mesh, side: str,
                             interval: Sequence[float] = (0.0, 1.0)) -> np.ndarray:
    """Active vertices on ``side`` whose running coordinate lies in ``interval``."""
    lo, hi = map(float, interval)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    if side == "left":
        on, s = np.abs(x) < _COORD_TOL, y
    elif side == "right":
        on, s = np.abs(x - 1.0) < _COORD_TOL, y
    elif side == "bottom":
        on, s = np.abs(y) < _COORD_TOL, x
    elif side == "top":
        on, s = np.abs(y - 1.0) < _COORD_TOL, x
    elif side == "hole":
        return np.flatnonzero(mesh.boundary_tag == "hole")
    else:
        raise MeshError(f"unknown side {side!r}")
    sel = on & mesh.active & (s >= lo - _COORD_TOL) & (s <= hi + _COORD_TOL)
    return np.flatnonzero(sel)


def check_stiffness_condition(mesh: Mesh, tol: float = 1e-14) -> bool:
    """True iff all assembled off-diagonal stiffness entries are <= ``tol``."""
    local = np.einsum("tid,tjd->tij", mesh.grads, mesh.grads) * mesh.area[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    off = rows != cols
    k = coo_matrix((local.ravel()[off], (rows[off], cols[off])),
                   shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    k.sum_duplicates()
    return bool(k.nnz == 0 or k.data.max() <= tol)
