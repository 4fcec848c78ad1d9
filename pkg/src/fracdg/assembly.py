"""Assembly of the bilinear forms and load vectors of the coupled system.

Block shapes follow the unknown ordering (u, p, p_G):

* ``M`` (flux x flux): (K^{-1} u, v)
* ``Bstar`` (flux x pressure): entry [v, p] = b_h^*(p, v)
* ``B`` (pressure x flux): entry [q, u] = b_h(u, q)
* ``C_avg``, ``C_jump`` (pressure x pressure): interface terms weighted by
  1/alpha and 1/eta
* ``D`` (pressure x fracture): -sum (1/alpha) <p_G, {q}>
* ``A_G``, ``C_G`` (fracture x fracture): fracture stiffness and 1/alpha mass

The adjoint property of the staggered forms makes ``B == Bstar.T``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh.staggered import StaggeredMesh
from .quadrature import lagrange_basis, legendre01, line_rule, quadrature_check, symmetric_triangle_rule, triangle_rule
from .spaces.functions import ScalarField, map_points
from .spaces.layout import DofLayout

__all__ = [
    "AssembledBlocks",
    "BoundaryConfigError",
    "Coefficients",
    "ProblemData",
    "apply_boundary",
    "assemble",
    "export_coo",
    "quadrature_check",
]


class BoundaryConfigError(ValueError):
    """Raised when the boundary data cannot determine a unique solution."""


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Bulk permeability per cell and fracture parameters per fracture edge.

    Attributes
    ----------
    K : (n_cells, 2, 2) symmetric positive definite tensors
    kappa_n, kappa_star, ell : (n_fracture_edges,) normal and tangential
        fracture permeabilities and the fracture aperture
    xi : closure parameter in (1/2, 1]
    """

    K: np.ndarray
    kappa_n: np.ndarray
    kappa_star: np.ndarray
    ell: np.ndarray
    xi: float

    def __post_init__(self) -> None:
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 3 or K.shape[1:] != (2, 2):
            raise ValueError("K must have shape (n_cells, 2, 2)")
        if not np.allclose(K, K.transpose(0, 2, 1), rtol=1e-14, atol=0.0):
            raise ValueError("K must be symmetric")
        if np.any(np.linalg.eigvalsh(K)[:, 0] <= 0.0):
            raise ValueError("K must be positive definite")
        for name in ("kappa_n", "kappa_star", "ell"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(~np.isfinite(v)) or np.any(v <= 0.0):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, v)
        if not 0.5 < self.xi <= 1.0:
            raise ValueError("xi must lie in (1/2, 1]")
        object.__setattr__(self, "K", K)

    @classmethod
    def uniform(
        cls,
        mesh: StaggeredMesh,
        K,
        kappa_n: float,
        kappa_star: float,
        ell: float,
        xi: float,
    ) -> "Coefficients":
        """Same tensor in every cell and same fracture data on every edge."""
        nc, nf = mesh.mesh.n_cells, max(mesh.n_fracture, 1)
        K = np.broadcast_to(np.asarray(K, dtype=float), (nc, 2, 2)).copy()
        return cls(
            K=K,
            kappa_n=np.full(nf, float(kappa_n)),
            kappa_star=np.full(nf, float(kappa_star)),
            ell=np.full(nf, float(ell)),
            xi=float(xi),
        )

    @property
    def eta(self) -> np.ndarray:
        return self.ell / self.kappa_n

    @property
    def alpha(self) -> np.ndarray:
        return self.eta * (self.xi / 2.0 - 0.25)

    @property
    def K_gamma(self) -> np.ndarray:
        return self.kappa_star * self.ell

    def scaled(self, s: float) -> "Coefficients":
        return dataclasses.replace(self, K=self.K * s)


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Sources and boundary data.

    ``f`` and ``p0`` take points (n, 2) and subdomain labels (n,);
    ``ell_f_gamma`` (the aperture-weighted fracture source) and ``g_gamma``
    (the fracture pressure at the fracture tips) take points only;
    ``neumann_flux`` takes points and outward unit normals and returns the
    prescribed u.n. Missing entries mean zero data.
    """

    f: ScalarField | None = None
    ell_f_gamma: Callable[[np.ndarray], np.ndarray] | None = None
    p0: ScalarField | None = None
    neumann_flux: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    g_gamma: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class AssembledBlocks:
    M: sp.csr_matrix
    B: sp.csr_matrix
    Bstar: sp.csr_matrix
    C_avg: sp.csr_matrix
    C_jump: sp.csr_matrix
    D: sp.csr_matrix
    A_G: sp.csr_matrix
    C_G: sp.csr_matrix
    rhs_f: np.ndarray
    rhs_fG: np.ndarray
    M_local: np.ndarray  # (nt, n_u, n_u) sign-corrected triangle flux mass matrices
    rhs_bc: np.ndarray = field(default=None)  # pressure rows, Neumann data
    p_fixed: np.ndarray = field(default=None)  # Dirichlet SD1 values (0 elsewhere)
    g_fixed: np.ndarray = field(default=None)  # fracture tip values (0 elsewhere)
    bc_applied: bool = False

    @property
    def C(self) -> sp.csr_matrix:
        return (self.C_avg + self.C_jump).tocsr()

    @property
    def A_fracture(self) -> sp.csr_matrix:
        return (self.A_G + self.C_G).tocsr()


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    m = sp.coo_matrix(
        (np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape
    ).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def _block_indices(l2g_rows: np.ndarray, l2g_cols: np.ndarray):
    n_r, n_c = l2g_rows.shape[1], l2g_cols.shape[1]
    rows = np.repeat(l2g_rows[:, :, None], n_c, axis=2)
    cols = np.repeat(l2g_cols[:, None, :], n_r, axis=1)
    return rows, cols


def _flux_mass(layout: DofLayout, coeffs: Coefficients) -> tuple[sp.csr_matrix, np.ndarray]:
    sm, ref = layout.mesh, layout.ref
    rule = triangle_rule(2 * layout.k)
    V, _ = ref.flux_basis(rule.points)
    # reference tensor R[l, m, i, j] = int v_hat_l,i v_hat_m,j
    R = np.einsum("q,qli,qmj->lmij", rule.weights, V, V)
    J = sm.jacobians()
    det = np.linalg.det(J)
    Kinv = np.linalg.inv(coeffs.K[sm.tri_cell])
    A = np.einsum("tki,tkl,tlj->tij", J, Kinv, J) / det[:, None, None]
    loc = np.einsum("lmij,tij->tlm", R, A)
    loc *= layout.u_sign[:, :, None] * layout.u_sign[:, None, :]
    rows, cols = _block_indices(layout.u_l2g, layout.u_l2g)
    return _csr(rows, cols, loc, (layout.n_flux, layout.n_flux)), loc


def _divergence_pair(layout: DofLayout) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    ref = layout.ref
    sign = layout.p_sign[:, :, None] * layout.u_sign[:, None, :]
    rows, cols = _block_indices(layout.p_l2g, layout.u_l2g)
    B = _csr(rows, cols, sign * ref.local_b[None], (layout.n_pressure, layout.n_flux))
    Bs = _csr(cols, rows, sign * ref.local_bstar[None], (layout.n_flux, layout.n_pressure))
    return B, Bs


def _fracture_forms(layout: DofLayout, coeffs: Coefficients):
    """C_avg, C_jump, D, A_G, C_G."""
    sm, k = layout.mesh, layout.k
    nf, ne = sm.n_fracture, layout.n_edge
    npr, ng = layout.n_pressure, layout.n_fracture
    if nf == 0:
        z = sp.csr_matrix
        return z((npr, npr)), z((npr, npr)), z((npr, ng)), z((ng, ng)), z((ng, ng))
    h = sm.frac_length()
    inv_a = 1.0 / coeffs.alpha
    inv_e = 1.0 / coeffs.eta
    KG = coeffs.K_gamma

    rule = line_rule(2 * k + 2)
    s, w = rule.points, rule.weights
    lag, dlag = lagrange_basis(layout.g_nodes, s)
    mass = np.einsum("q,qn,qm->nm", w, lag, lag)
    stiff = np.einsum("q,qn,qm->nm", w, dlag, dlag)

    rows, cols, vals = [], [], []
    drows, dcols, dvals = [], [], []
    for f in range(nf):
        d1 = layout.fracture_side_dofs(f, 0)
        d2 = layout.fracture_side_dofs(f, 1)
        # <{p},{q}> and <[p],[q]> from Legendre orthonormality
        wa = inv_a[f] * h[f] / 4.0
        wj = inv_e[f] * h[f]
        for (r, c, sgn) in ((d1, d1, 1.0), (d2, d2, 1.0), (d1, d2, -1.0), (d2, d1, -1.0)):
            rows.append(r)
            cols.append(c)
            vals.append(np.column_stack([np.full(ne, wa * abs(sgn)), np.full(ne, wj * sgn)]))
        # the chain may run against the edge's moment parameter
        a, b = sm.frac_vertices[f]
        s_edge = 1.0 - s if a > b else s
        G = np.einsum("q,qn,qj->nj", w, lag, legendre01(ne, s_edge))
        nodes = layout.g_l2g[f]
        for d in (d1, d2):
            rr, cc = np.meshgrid(d, nodes, indexing="ij")
            drows.append(rr.ravel())
            dcols.append(cc.ravel())
            dvals.append((-inv_a[f] * h[f] * 0.5 * G.T).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    C_avg = _csr(rows, cols, vals[:, 0], (npr, npr))
    C_jump = _csr(rows, cols, vals[:, 1], (npr, npr))
    D = _csr(np.concatenate(drows), np.concatenate(dcols), np.concatenate(dvals), (npr, ng))

    g_rows, g_cols = _block_indices(layout.g_l2g, layout.g_l2g)
    A_G = _csr(g_rows, g_cols, (KG / h)[:, None, None] * stiff[None], (ng, ng))
    C_G = _csr(g_rows, g_cols, (inv_a * h)[:, None, None] * mass[None], (ng, ng))
    return C_avg, C_jump, D, A_G, C_G


def _bulk_load(layout: DofLayout, f: ScalarField | None) -> np.ndarray:
    out = np.zeros(layout.n_pressure)
    if f is None:
        return out
    # vertex-symmetric rule: mirrored meshes give mirrored load vectors
    rule = symmetric_triangle_rule(2 * layout.k + 2)
    N, _ = layout.ref.pressure_basis(rule.points)
    X = map_points(layout, rule.points)
    nt, nq = X.shape[:2]
    vals = np.asarray(f(X.reshape(-1, 2), np.repeat(layout.mesh.tri_sub, nq)), float).reshape(nt, nq)
    det = np.linalg.det(layout.mesh.jacobians())
    loc = np.einsum("tq,q,ql->tl", vals, rule.weights, N) * det[:, None] * layout.p_sign
    np.add.at(out, layout.p_l2g.ravel(), loc.ravel())
    return out


def _fracture_load(layout: DofLayout, ell_f: Callable | None) -> np.ndarray:
    out = np.zeros(layout.n_fracture)
    sm = layout.mesh
    if ell_f is None or sm.n_fracture == 0:
        return out
    rule = line_rule(2 * layout.k + 2)
    lag, _ = lagrange_basis(layout.g_nodes, rule.points)
    h = sm.frac_length()
    a = sm.points[sm.frac_vertices[:, 0]]
    b = sm.points[sm.frac_vertices[:, 1]]
    X = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    vals = np.asarray(ell_f(X.reshape(-1, 2)), float).reshape(X.shape[:2])
    loc = np.einsum("fq,q,qn->fn", vals, rule.weights, lag) * h[:, None]
    np.add.at(out, layout.g_l2g.ravel(), loc.ravel())
    return out


def assemble(
    mesh: StaggeredMesh,
    layout: DofLayout,
    coeffs: Coefficients,
    data: ProblemData | None = None,
) -> AssembledBlocks:
    """Assemble every block and the source terms (boundary data excluded)."""
    if layout.mesh is not mesh:
        raise ValueError("layout was built on a different mesh")
    if coeffs.K.shape[0] != mesh.mesh.n_cells:
        raise ValueError("one permeability tensor per cell is required")
    if mesh.n_fracture and len(coeffs.alpha) not in (1, mesh.n_fracture):
        raise ValueError("fracture coefficients do not match the fracture edges")
    if mesh.n_fracture and len(coeffs.alpha) == 1 and mesh.n_fracture > 1:
        nf = mesh.n_fracture
        coeffs = dataclasses.replace(
            coeffs,
            kappa_n=np.full(nf, coeffs.kappa_n[0]),
            kappa_star=np.full(nf, coeffs.kappa_star[0]),
            ell=np.full(nf, coeffs.ell[0]),
        )
    data = data or ProblemData()
    M, M_local = _flux_mass(layout, coeffs)
    B, Bstar = _divergence_pair(layout)
    C_avg, C_jump, D, A_G, C_G = _fracture_forms(layout, coeffs)
    return AssembledBlocks(
        M=M,
        B=B,
        Bstar=Bstar,
        C_avg=C_avg,
        C_jump=C_jump,
        D=D,
        A_G=A_G,
        C_G=C_G,
        rhs_f=_bulk_load(layout, data.f),
        rhs_fG=_fracture_load(layout, data.ell_f_gamma),
        M_local=M_local,
    )


def _edge_moments(sm: StaggeredMesh, edges: np.ndarray, ne: int, func) -> np.ndarray:
    """h_e-free moments int_0^1 g(x(s)) L_j(s) ds on primal edges, parameter
    from the lower to the higher vertex id. ``func`` gets (points, edge ids)."""
    rule = line_rule(2 * ne + 2)
    L = legendre01(ne, rule.points)
    v = sm.points[sm.primal_vertices[edges]]
    X = v[:, None, 0, :] + rule.points[None, :, None] * (v[:, None, 1, :] - v[:, None, 0, :])
    vals = func(X.reshape(-1, 2), np.repeat(edges, len(rule.points))).reshape(len(edges), -1)
    return np.einsum("eq,q,qj->ej", vals, rule.weights, L)


def apply_boundary(blocks: AssembledBlocks, layout: DofLayout, data: ProblemData | None = None) -> AssembledBlocks:
    """Attach Dirichlet values, Neumann loads and fracture tip values."""
    sm = layout.mesh
    data = data or ProblemData()
    ne = layout.n_edge
    if not np.any(sm.primal_dirichlet):
        raise BoundaryConfigError("no Dirichlet boundary edge: the bulk pressure is not determined")
    p_fixed = np.zeros(layout.n_pressure)
    rhs_bc = np.zeros(layout.n_pressure)
    edge_sub = sm.tri_sub[sm.primal_tris[:, 0]]

    dir_edges = np.flatnonzero(sm.primal_dirichlet)
    if data.p0 is not None and len(dir_edges):
        mom = _edge_moments(sm, dir_edges, ne, lambda X, e: data.p0(X, edge_sub[e]))
        p_fixed[(dir_edges[:, None] * ne + np.arange(ne)).ravel()] = mom.ravel()

    neu_edges = np.flatnonzero(sm.primal_neumann)
    if data.neumann_flux is not None and len(neu_edges):
        nrm = sm.primal_normal()
        mom = _edge_moments(sm, neu_edges, ne, lambda X, e: data.neumann_flux(X, nrm[e]))
        mom *= sm.primal_length()[neu_edges, None]
        np.add.at(rhs_bc, (neu_edges[:, None] * ne + np.arange(ne)).ravel(), -mom.ravel())

    g_fixed = np.zeros(layout.n_fracture)
    if data.g_gamma is not None and layout.n_fracture:
        tips = np.flatnonzero(layout.g_dirichlet)
        g_fixed[tips] = np.asarray(data.g_gamma(layout.fracture_node_xy()[tips]), float)

    return dataclasses.replace(blocks, rhs_bc=rhs_bc, p_fixed=p_fixed, g_fixed=g_fixed, bc_applied=True)


def export_coo(matrix: sp.spmatrix, path: str | Path) -> None:
    """Write ``row col value`` lines (0-based) with a shape header."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")
