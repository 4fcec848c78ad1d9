"""Simplicial submesh, dual regions and edge classes of a polygonal mesh.

Each polygon is fanned from an interior point nu into triangles
``(nu, v_i, v_{i+1})``. Every triangle owns exactly one polygon edge (a
primal or fracture edge) and two dual edges ``nu - v_i`` and ``nu - v_{i+1}``.
In each triangle the local vertex order is (nu, a, b) with ``a -> b`` the
polygon edge, which matches the reference triangle (0,0), (1,0), (0,1).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .polygonal import MeshError, PolygonalMesh, edge_key, polygon_centroid
from .quality import kernel_chebyshev


class EdgeClass(Enum):
    PRIMAL_INTERIOR = "F_u^0"
    PRIMAL_BOUNDARY = "F_u boundary"
    DUAL = "F_p"
    FRACTURE = "F_h^Gamma"


def _tri_signed_area(p: np.ndarray) -> np.ndarray:
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


@dataclass(eq=False)
class StaggeredMesh:
    """Fan triangulation with the edge bookkeeping of the staggered spaces.

    Point indices: mesh vertices first, then one interior point per cell.
    Primal edges (``primal_*``) exclude fracture edges, which are stored in
    ``frac_*`` with one triangle per side. Dual edges are stored with the
    vertex first and the interior point second; their normal points from the
    lower-indexed adjacent triangle to the higher-indexed one.
    """

    mesh: PolygonalMesh
    points: np.ndarray
    triangles: np.ndarray  # (nt, 3) point ids (nu, a, b)
    tri_cell: np.ndarray
    tri_sub: np.ndarray
    # primal edges F_u
    primal_vertices: np.ndarray  # (ne, 2) sorted vertex ids
    primal_tris: np.ndarray  # (ne, 2), second = -1 on the boundary
    primal_dirichlet: np.ndarray  # bool (ne,), boundary Dirichlet edges
    primal_neumann: np.ndarray  # bool (ne,)
    # fracture edges, in chain order
    frac_vertices: np.ndarray  # (nf, 2) in chain direction
    frac_tris: np.ndarray  # (nf, 2): side-1 triangle, side-2 triangle
    frac_normal: np.ndarray  # (nf, 2) unit normal from side 1 to side 2
    # dual edges F_p
    dual_points: np.ndarray  # (nd, 2) (vertex, nu)
    dual_tris: np.ndarray  # (nd, 2) lower, higher triangle index
    dual_normal: np.ndarray  # (nd, 2)
    # per-triangle incidence
    tri_edge_kind: np.ndarray  # 0: primal edge, 1: fracture edge
    tri_edge_id: np.ndarray
    tri_edge_flip: np.ndarray  # global parameter runs b -> a
    tri_dual: np.ndarray  # (nt, 2) dual edge ids for (nu,a) and (nu,b)
    tri_dual_sign: np.ndarray  # (nt, 2) +1 if the global normal is outward

    # ---- geometry --------------------------------------------------------

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_primal(self) -> int:
        return len(self.primal_vertices)

    @property
    def n_fracture(self) -> int:
        return len(self.frac_vertices)

    @property
    def n_dual(self) -> int:
        return len(self.dual_points)

    def tri_xy(self) -> np.ndarray:
        return self.points[self.triangles]

    def jacobians(self) -> np.ndarray:
        p = self.tri_xy()
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    def tri_area(self) -> np.ndarray:
        return _tri_signed_area(self.tri_xy())

    def tri_diameter(self) -> np.ndarray:
        p = self.tri_xy()
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (0, 2))]
        return np.max(d, axis=0)

    @property
    def h(self) -> float:
        return float(self.tri_diameter().max())

    def primal_length(self) -> np.ndarray:
        v = self.points[self.primal_vertices]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    def frac_length(self) -> np.ndarray:
        v = self.points[self.frac_vertices]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    def dual_length(self) -> np.ndarray:
        v = self.points[self.dual_points]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    def primal_normal(self) -> np.ndarray:
        """Normals of primal edges: lower to higher cell, outward on the boundary."""
        out = np.zeros((self.n_primal, 2))
        for e, (t1, t2) in enumerate(self.primal_tris):
            a, b = self.points[self.primal_vertices[e]]
            d = b - a
            n = np.array([d[1], -d[0]]) / np.hypot(*d)
            c1 = self.points[self.triangles[t1, 0]]
            if np.dot(n, a - c1) < 0:
                n = -n
            if t2 >= 0 and self.tri_cell[t1] > self.tri_cell[t2]:
                n = -n
            out[e] = n
        return out

    # ---- classification helpers ------------------------------------------

    def edge_class(self) -> dict[tuple[int, int], EdgeClass]:
        """Class of every edge, keyed by sorted point ids."""
        out: dict[tuple[int, int], EdgeClass] = {}
        for e, (t1, t2) in enumerate(self.primal_tris):
            key = tuple(int(v) for v in self.primal_vertices[e])
            out[key] = EdgeClass.PRIMAL_INTERIOR if t2 >= 0 else EdgeClass.PRIMAL_BOUNDARY
        for e in range(self.n_fracture):
            out[edge_key(*map(int, self.frac_vertices[e]))] = EdgeClass.FRACTURE
        for e in range(self.n_dual):
            out[edge_key(*map(int, self.dual_points[e]))] = EdgeClass.DUAL
        return out

    def dual_region(self) -> dict[tuple, list[int]]:
        """D(e) for primal edges and for each side of a fracture edge."""
        out: dict[tuple, list[int]] = {}
        for e, (t1, t2) in enumerate(self.primal_tris):
            key = tuple(int(v) for v in self.primal_vertices[e])
            out[key] = [int(t1)] if t2 < 0 else [int(t1), int(t2)]
        for e in range(self.n_fracture):
            key = edge_key(*map(int, self.frac_vertices[e]))
            out[key + (1,)] = [int(self.frac_tris[e, 0])]
            out[key + (2,)] = [int(self.frac_tris[e, 1])]
        return out


def _interior_point(xy: np.ndarray, cell: int) -> np.ndarray:
    nu = polygon_centroid(xy)
    tri = np.stack([np.broadcast_to(nu, xy.shape), xy, np.roll(xy, -1, axis=0)], axis=1)
    scale = float(np.ptp(xy, axis=0).max()) ** 2
    if np.all(_tri_signed_area(tri) > 1e-14 * scale):
        return nu
    centre, r = kernel_chebyshev(xy)
    tri = np.stack([np.broadcast_to(centre, xy.shape), xy, np.roll(xy, -1, axis=0)], axis=1)
    if r <= 0.0 or np.any(_tri_signed_area(tri) <= 0.0):
        raise MeshError(f"cell {cell} is not star-shaped with respect to an interior point")
    return centre


def build_staggered(mesh: PolygonalMesh) -> StaggeredMesh:
    """Fan-triangulate every cell and classify all edges."""
    nv = mesh.n_vertices
    nus = np.array([_interior_point(mesh.cell_xy(c), c) for c in range(mesh.n_cells)])
    points = np.vstack([mesh.vertices, nus])

    tris, tri_cell = [], []
    for c, loop in enumerate(mesh.cells):
        m = len(loop)
        for i in range(m):
            tris.append((nv + c, int(loop[i]), int(loop[(i + 1) % m])))
            tri_cell.append(c)
    triangles = np.array(tris, dtype=int)
    tri_cell = np.array(tri_cell, dtype=int)
    tri_sub = mesh.subdomain[tri_cell]
    nt = len(triangles)
    area = _tri_signed_area(points[triangles])
    bad = np.flatnonzero(area <= 0.0)
    if len(bad):
        raise MeshError(f"non-positive sub-triangle in cell {tri_cell[bad[0]]}")

    # fracture edges in chain order
    chain = mesh.fracture_edges()
    frac_index = {edge_key(a, b): i for i, (a, b) in enumerate(chain)}
    frac_vertices = np.array(chain, dtype=int).reshape(-1, 2)
    frac_tris = -np.ones((len(chain), 2), dtype=int)

    primal_index: dict[tuple[int, int], int] = {}
    primal_vertices: list[tuple[int, int]] = []
    primal_tris: list[list[int]] = []
    tri_edge_kind = np.zeros(nt, dtype=int)
    tri_edge_id = np.zeros(nt, dtype=int)
    tri_edge_flip = np.zeros(nt, dtype=bool)
    for t, (_, a, b) in enumerate(triangles):
        key = edge_key(a, b)
        tri_edge_flip[t] = a > b
        if key in frac_index:
            f = frac_index[key]
            tri_edge_kind[t] = 1
            tri_edge_id[t] = f
            side = 0 if tri_sub[t] == 1 else 1
            if frac_tris[f, side] >= 0:
                raise MeshError(f"fracture edge {key} has two triangles on one side")
            frac_tris[f, side] = t
        else:
            if key not in primal_index:
                primal_index[key] = len(primal_vertices)
                primal_vertices.append(key)
                primal_tris.append([t, -1])
            else:
                primal_tris[primal_index[key]][1] = t
            tri_edge_id[t] = primal_index[key]
    if np.any(frac_tris < 0):
        raise MeshError("a fracture edge lacks a neighbouring cell on one side")

    primal_vertices_a = np.array(primal_vertices, dtype=int).reshape(-1, 2)
    primal_tris_a = np.array(primal_tris, dtype=int).reshape(-1, 2)
    boundary = primal_tris_a[:, 1] < 0
    neumann = np.array([tuple(e) in mesh.neumann for e in primal_vertices], dtype=bool) & boundary
    dirichlet = boundary & ~neumann

    fxy = points[frac_vertices]
    d = fxy[:, 1] - fxy[:, 0]
    # subdomain 1 lies left of the chain; the normal points to its right
    frac_normal = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]

    # dual edges: (nu, a) of triangle i is (nu, b) of the previous triangle
    dual_points, dual_tris = [], []
    tri_dual = np.zeros((nt, 2), dtype=int)
    tri_dual_sign = np.zeros((nt, 2))
    start = 0
    for c, loop in enumerate(mesh.cells):
        m = len(loop)
        for i in range(m):
            t = start + i
            t_prev = start + (i - 1) % m
            e = len(dual_points)
            dual_points.append((int(loop[i]), nv + c))
            lo, hi = min(t, t_prev), max(t, t_prev)
            dual_tris.append((lo, hi))
            tri_dual[t, 0] = e
            tri_dual[t_prev, 1] = e
            tri_dual_sign[t, 0] = 1.0 if t == lo else -1.0
            tri_dual_sign[t_prev, 1] = 1.0 if t_prev == lo else -1.0
        start += m
    dual_points_a = np.array(dual_points, dtype=int)
    dual_tris_a = np.array(dual_tris, dtype=int)
    # outward normal of triangle `lo` on its dual edge
    dxy = points[dual_points_a]
    dd = dxy[:, 1] - dxy[:, 0]
    dn = np.column_stack([dd[:, 1], -dd[:, 0]]) / np.linalg.norm(dd, axis=1)[:, None]
    lo_centroid = points[triangles[dual_tris_a[:, 0]]].mean(axis=1)
    flip = np.einsum("ij,ij->i", dn, dxy[:, 0] - lo_centroid) < 0
    dn[flip] *= -1.0

    return StaggeredMesh(
        mesh=mesh,
        points=points,
        triangles=triangles,
        tri_cell=tri_cell,
        tri_sub=tri_sub,
        primal_vertices=primal_vertices_a,
        primal_tris=primal_tris_a,
        primal_dirichlet=dirichlet,
        primal_neumann=neumann,
        frac_vertices=frac_vertices,
        frac_tris=frac_tris,
        frac_normal=frac_normal,
        dual_points=dual_points_a,
        dual_tris=dual_tris_a,
        dual_normal=dn,
        tri_edge_kind=tri_edge_kind,
        tri_edge_id=tri_edge_id,
        tri_edge_flip=tri_edge_flip,
        tri_dual=tri_dual,
        tri_dual_sign=tri_dual_sign,
    )
