"""Global numbering of the pressure, flux and fracture-pressure spaces.

Pressure dofs are ordered as: edge moments on primal edges, two independent
sets of edge moments per fracture edge (side 1 then side 2), and interior
moments per triangle. Edge moments use orthonormal Legendre polynomials in
a global edge parameter running from the lower to the higher vertex id.

Flux dofs are ordered as: normal moments on dual edges (parameter from the
polygon vertex towards the interior point, normal as stored on the
staggered mesh), then interior vector moments per triangle.

The fracture space is continuous P^k on the fracture chain with
Gauss-Lobatto nodes; node ``e*k + r`` is node ``r`` of fracture edge ``e``.
The two chain ends are boundary nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..mesh.staggered import StaggeredMesh
from ..quadrature import gauss_lobatto_nodes
from .reference import ReferenceElement, reference_element

log = logging.getLogger(__name__)


@dataclass(eq=False)
class DofLayout:
    """Global dof numbering for one staggered mesh and degree ``k``."""

    mesh: StaggeredMesh
    k: int
    ref: ReferenceElement
    n_pressure: int
    n_flux: int
    n_fracture: int
    p_l2g: np.ndarray  # (nt, n_p)
    p_sign: np.ndarray  # (nt, n_p)
    u_l2g: np.ndarray  # (nt, n_u)
    u_sign: np.ndarray  # (nt, n_u)
    g_l2g: np.ndarray  # (nf, k+1) fracture nodes per fracture edge, chain order
    g_nodes: np.ndarray  # Gauss-Lobatto nodes on [0, 1]
    p_dirichlet: np.ndarray  # bool (n_pressure,)
    g_dirichlet: np.ndarray  # bool (n_fracture,)
    offset_frac: int
    offset_interior: int
    offset_u_interior: int

    @property
    def n_edge(self) -> int:
        return self.k + 1

    @property
    def ndof(self) -> tuple[int, int, int]:
        return self.n_flux, self.n_pressure, self.n_fracture

    def primal_dofs(self, e: int) -> np.ndarray:
        return e * self.n_edge + np.arange(self.n_edge)

    def fracture_side_dofs(self, f: int, side: int) -> np.ndarray:
        """SD3 dofs of fracture edge ``f`` on side 0 (subdomain 1) or 1."""
        start = self.offset_frac + (2 * f + side) * self.n_edge
        return start + np.arange(self.n_edge)

    def dual_dofs(self, e: int) -> np.ndarray:
        return e * self.n_edge + np.arange(self.n_edge)

    def fracture_node_xy(self) -> np.ndarray:
        """Coordinates of all fracture nodes in global order."""
        sm = self.mesh
        out = np.zeros((self.n_fracture, 2))
        for f in range(sm.n_fracture):
            a, b = sm.points[sm.frac_vertices[f]]
            out[self.g_l2g[f]] = a[None, :] + self.g_nodes[:, None] * (b - a)[None, :]
        return out

    def free_pressure(self) -> np.ndarray:
        return np.flatnonzero(~self.p_dirichlet)

    def free_fracture(self) -> np.ndarray:
        return np.flatnonzero(~self.g_dirichlet)


def build_layout(mesh: StaggeredMesh, k: int) -> DofLayout:
    """Number the dofs of S_h, V_h and W_h on ``mesh`` for degree ``k``."""
    if int(k) != k or k < 1:
        raise ValueError("degree k must be an integer >= 1 (the fracture space is H^1-conforming)")
    k = int(k)
    ref = reference_element(k)
    ne, nI = k + 1, ref.n_int
    nt = mesh.n_triangles

    off_frac = mesh.n_primal * ne
    off_int = off_frac + 2 * mesh.n_fracture * ne
    n_pressure = off_int + nt * nI

    edge_local = np.arange(ne)
    parity = np.where(edge_local % 2 == 1, -1.0, 1.0)
    p_l2g = np.zeros((nt, ref.n_p), dtype=int)
    p_sign = np.ones((nt, ref.n_p))
    for t in range(nt):
        e = mesh.tri_edge_id[t]
        if mesh.tri_edge_kind[t] == 0:
            start = e * ne
        else:
            side = 0 if mesh.tri_sub[t] == 1 else 1
            start = off_frac + (2 * e + side) * ne
        p_l2g[t, :ne] = start + edge_local
        if mesh.tri_edge_flip[t]:
            p_sign[t, :ne] = parity
    p_l2g[:, ne:] = off_int + np.arange(nt)[:, None] * nI + np.arange(nI)[None, :]

    off_u_int = mesh.n_dual * ne
    n_flux = off_u_int + nt * 2 * nI
    u_l2g = np.zeros((nt, ref.n_u), dtype=int)
    u_sign = np.ones((nt, ref.n_u))
    for j in range(2):
        u_l2g[:, j * ne:(j + 1) * ne] = mesh.tri_dual[:, j][:, None] * ne + edge_local[None, :]
        u_sign[:, j * ne:(j + 1) * ne] = mesh.tri_dual_sign[:, j][:, None]
    u_l2g[:, 2 * ne:] = off_u_int + np.arange(nt)[:, None] * 2 * nI + np.arange(2 * nI)[None, :]

    nf = mesh.n_fracture
    n_fracture = nf * k + 1 if nf else 0
    g_l2g = np.arange(nf)[:, None] * k + np.arange(k + 1)[None, :]
    g_dirichlet = np.zeros(n_fracture, dtype=bool)
    if nf:
        g_dirichlet[[0, -1]] = True

    p_dirichlet = np.zeros(n_pressure, dtype=bool)
    for e in np.flatnonzero(mesh.primal_dirichlet):
        p_dirichlet[e * ne:(e + 1) * ne] = True

    return DofLayout(
        mesh=mesh,
        k=k,
        ref=ref,
        n_pressure=n_pressure,
        n_flux=n_flux,
        n_fracture=n_fracture,
        p_l2g=p_l2g,
        p_sign=p_sign,
        u_l2g=u_l2g,
        u_sign=u_sign,
        g_l2g=g_l2g,
        g_nodes=gauss_lobatto_nodes(k),
        p_dirichlet=p_dirichlet,
        g_dirichlet=g_dirichlet,
        offset_frac=off_frac,
        offset_interior=off_int,
        offset_u_interior=off_u_int,
    )


def local_basis(layout: DofLayout, t: int, which: str = "pressure") -> np.ndarray:
    """Dual basis of the local dof functionals on triangle ``t``.

    Returns the coefficients of the local basis functions in the
    orthonormal frame of the triangle (columns = basis functions, ordered
    as the global dofs of the triangle with their sign convention applied).
    The frame is orthonormal on the reference triangle and hence orthogonal
    with constant weight 2|tau| on the physical one.
    """
    ref = layout.ref
    sm = layout.mesh
    if which == "pressure":
        dofs, sign = ref.p_dofs, layout.p_sign[t]
    elif which == "flux":
        dofs, sign = ref.u_dofs, layout.u_sign[t]
    else:
        raise ValueError(f"unknown space {which!r}")
    cond = ref.p_cond if which == "pressure" else ref.u_cond
    # the affine/Piola maps leave the moment matrices unchanged, so only the
    # physical shape of the triangle can spoil the local conditioning
    J = sm.jacobians()[t]
    geom = float(np.linalg.cond(J))
    if cond * geom > 1e10:
        log.warning("triangle %d (cell %d): local %s basis poorly conditioned (%.3g)",
                    t, sm.tri_cell[t], which, cond * geom)
    return np.linalg.inv(dofs) * sign[None, :]
