"""Coupled block system, its solution, and stability diagnostics.

The flux unknowns of one polygon only interact with that polygon's pressure
dofs, so the flux mass matrix is block diagonal per polygon. The default
solver exploits this: per polygon it eliminates the flux and the interior
pressure moments with batched dense algebra, leaving a symmetric positive
definite sparse system in the edge pressure moments and the fracture
pressure, which is factorized directly. The symmetrized monolithic system
is always formed as well; it defines the residual gate and can be
factorized directly (``method="full"``) as an independent cross-check.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledBlocks
from .quadrature import legendre01, line_rule
from .spaces.functions import DiscreteFunction, map_points
from .spaces.layout import DofLayout
from .spaces.reference import DUAL_A, DUAL_B

log = logging.getLogger(__name__)

RESIDUAL_GATE = 1e-10


class SolverError(RuntimeError):
    """Raised when the discrete system is singular or misses the residual gate."""


@dataclass(eq=False)
class CoupledSystem:
    """Block system over (u, free p, free p_G) with lifted boundary data.

    ``matrix`` is the symmetrized form obtained by negating the flux rows:
    [[-M, -Bstar, 0], [-B, C_avg + C_jump, D], [0, D^T, A_G + C_G]].
    """

    layout: DofLayout
    blocks: AssembledBlocks
    p_free: np.ndarray
    g_free: np.ndarray
    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.layout.n_flux, len(self.p_free), len(self.g_free)

    def split(self, x: np.ndarray):
        nu, npf, _ = self.sizes
        return x[:nu], x[nu:nu + npf], x[nu + npf:]

    def pack(self, u: np.ndarray, p: np.ndarray, g: np.ndarray) -> np.ndarray:
        return np.concatenate([u, p[self.p_free], g[self.g_free]])

    def expand(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full (u, p, p_G) vectors including the prescribed values."""
        u, pf, gf = self.split(x)
        p = self.blocks.p_fixed.copy()
        p[self.p_free] = pf
        g = self.blocks.g_fixed.copy()
        g[self.g_free] = gf
        return u.copy(), p, g

    def residual(self, x: np.ndarray) -> float:
        """Relative residual ||A x - b|| / ||b|| (absolute when b = 0)."""
        r = self.matrix @ x - self.rhs
        nb = np.linalg.norm(self.rhs)
        return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def build_system(blocks: AssembledBlocks, layout: DofLayout) -> CoupledSystem:
    """Restrict to free dofs and move the prescribed values to the right."""
    if not blocks.bc_applied:
        raise ValueError("apply_boundary must run before the system is formed")
    pf, gf = layout.free_pressure(), layout.free_fracture()
    pd, gd = np.flatnonzero(layout.p_dirichlet), np.flatnonzero(layout.g_dirichlet)
    Bs, B, C, D, A = blocks.Bstar, blocks.B, blocks.C, blocks.D, blocks.A_fracture
    pfix, gfix = blocks.p_fixed, blocks.g_fixed

    # flux rows are negated: -M u - Bs p = 0
    r_u = Bs[:, pd] @ pfix[pd]
    r_p = (blocks.rhs_f + blocks.rhs_bc)[pf] - C[pf][:, pd] @ pfix[pd] - D[pf][:, gd] @ gfix[gd]
    r_g = blocks.rhs_fG[gf] - D[pd][:, gf].T @ pfix[pd] - A[gf][:, gd] @ gfix[gd]
    matrix = sp.bmat(
        [
            [-blocks.M, -Bs[:, pf], None],
            [-B[pf], C[pf][:, pf], D[pf][:, gf]],
            [None, D[pf][:, gf].T, A[gf][:, gf]],
        ],
        format="csr",
    )
    return CoupledSystem(layout, blocks, pf, gf, matrix, np.concatenate([r_u, r_p, r_g]))


@dataclass(frozen=True, eq=False)
class Solution:
    u: DiscreteFunction
    p: DiscreteFunction
    p_gamma: DiscreteFunction
    stats: dict = field(default_factory=dict)


# ---- per-polygon elimination ----------------------------------------------


@dataclass(eq=False)
class _CellGroup:
    """Polygons with the same vertex count, processed as one batch."""

    u_idx: np.ndarray  # (nc, Nu) global flux dofs
    p_edge: np.ndarray  # (nc, NE) global edge pressure dofs
    p_int: np.ndarray  # (nc, NI) global interior pressure dofs
    M_inv: np.ndarray  # inverses of the cell flux mass matrices
    Minv_Bs: np.ndarray  # (nc, Nu, NE + NI)
    SII_inv: np.ndarray  # inverses of the interior Schur blocks
    S_EI: np.ndarray  # (nc, NE, NI)
    S_hat: np.ndarray  # (nc, NE, NE) condensed edge matrices


def _cell_groups(layout: DofLayout, blocks: AssembledBlocks) -> list[_CellGroup]:
    sm, ref = layout.mesh, layout.ref
    ne, nI = layout.n_edge, ref.n_int
    sizes = np.array([len(c) for c in sm.mesh.cells])
    first_tri = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    bstar = ref.local_bstar.T  # (n_u, n_p) reference b_h^*
    groups = []
    for m in np.unique(sizes):
        cells = np.flatnonzero(sizes == m)
        tris = first_tri[cells][:, None] + np.arange(m)[None, :]
        nc = len(cells)
        NE, NI = m * ne, m * nI
        Nu = m * ne + 2 * NI
        Mc = np.zeros((nc, Nu, Nu))
        Bc = np.zeros((nc, Nu, NE + NI))
        u_idx = np.zeros((nc, Nu), dtype=int)
        p_idx = np.zeros((nc, NE + NI), dtype=int)
        for i in range(m):
            # triangle i owns dual edges i (as its first) and i+1 (as its second)
            um = np.concatenate([
                i * ne + np.arange(ne),
                ((i + 1) % m) * ne + np.arange(ne),
                m * ne + i * 2 * nI + np.arange(2 * nI),
            ])
            pm = np.concatenate([i * ne + np.arange(ne), NE + i * nI + np.arange(nI)])
            t = tris[:, i]
            Mc[:, um[:, None], um[None, :]] += blocks.M_local[t]
            sign = layout.u_sign[t][:, :, None] * layout.p_sign[t][:, None, :]
            Bc[:, um[:, None], pm[None, :]] += sign * bstar[None]
            u_idx[:, um] = layout.u_l2g[t]
            p_idx[:, pm] = layout.p_l2g[t]
        M_inv = np.linalg.inv(Mc)
        Minv_Bs = M_inv @ Bc
        S = np.swapaxes(Bc, 1, 2) @ Minv_Bs
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        S_EE, S_EI, S_II = S[:, :NE, :NE], S[:, :NE, NE:], S[:, NE:, NE:]
        if NI:
            SII_inv = np.linalg.inv(S_II)
            S_hat = S_EE - S_EI @ SII_inv @ np.swapaxes(S_EI, 1, 2)
        else:
            SII_inv = np.zeros((nc, 0, 0))
            S_hat = S_EE
        groups.append(_CellGroup(u_idx, p_idx[:, :NE], p_idx[:, NE:], M_inv, Minv_Bs, SII_inv, S_EI, S_hat))
    return groups


class CondensedSolver:
    """Direct solver using per-polygon elimination of flux and interior dofs."""

    def __init__(self, system: CoupledSystem):
        self.system = system
        lay, blocks = system.layout, system.blocks
        t0 = time.perf_counter()
        try:
            self.groups = _cell_groups(lay, blocks)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"local elimination failed: {exc}") from exc
        n_p = lay.n_pressure
        rows, cols, vals = [], [], []
        for g in self.groups:
            r = np.repeat(g.p_edge[:, :, None], g.p_edge.shape[1], axis=2)
            rows.append(r.ravel())
            cols.append(np.swapaxes(r, 1, 2).ravel())
            vals.append(g.S_hat.ravel())
        S = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_p, n_p)
        ).tocsr()
        self.S = (S + blocks.C).tocsr()
        is_edge = np.zeros(n_p, dtype=bool)
        is_edge[: lay.offset_interior] = True
        self.edge_free = np.flatnonzero(is_edge & ~lay.p_dirichlet)
        self.p_fixed_idx = np.flatnonzero(lay.p_dirichlet)
        gf, gd = system.g_free, np.flatnonzero(lay.g_dirichlet)
        ef = self.edge_free
        self._S_fixed = self.S[ef][:, self.p_fixed_idx]
        self._D_ef = blocks.D[ef]
        self._A = blocks.A_fracture
        self._gd = gd
        K = sp.bmat(
            [[self.S[ef][:, ef], self._D_ef[:, gf]], [self._D_ef[:, gf].T, self._A[gf][:, gf]]],
            format="csc",
        )
        self.K = K
        try:
            self.lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        self.setup_time = time.perf_counter() - t0

    @property
    def factor_nnz(self) -> int:
        return int(self.lu.L.nnz + self.lu.U.nnz)

    def solve(self, r_u, r_p, r_g, p_fixed, g_fixed):
        """Solve M u + Bs p = r_u, -B u + C p + D g = r_p, D^T p + A g = r_g.

        ``r_u`` and ``r_p`` are full-length (rows of prescribed pressures are
        ignored); ``r_g`` covers the free fracture dofs. Returns full
        (u, p, g) vectors with the prescribed values inserted.
        """
        lay = self.system.layout
        gf = self.system.g_free
        rt = np.array(r_p, dtype=float)
        z_cells = []
        for g in self.groups:
            z = (g.M_inv @ r_u[g.u_idx][:, :, None])[:, :, 0]
            # B M^{-1} r_u with B = Bs^T and M symmetric
            c = np.einsum("cup,cu->cp", g.Minv_Bs, r_u[g.u_idx])
            NE = g.p_edge.shape[1]
            np.add.at(rt, g.p_edge.ravel(), c[:, :NE].ravel())
            np.add.at(rt, g.p_int.ravel(), c[:, NE:].ravel())
            z_cells.append(z)
        red = rt.copy()
        for g in self.groups:
            if g.p_int.shape[1]:
                y = (g.SII_inv @ rt[g.p_int][:, :, None])[:, :, 0]
                np.add.at(red, g.p_edge.ravel(), -np.einsum("cei,ci->ce", g.S_EI, y).ravel())
        gd = self._gd
        rhs_e = red[self.edge_free] - self._S_fixed @ p_fixed[self.p_fixed_idx] - self._D_ef[:, gd] @ g_fixed[gd]
        rhs_g = np.array(r_g, dtype=float)
        rhs_g -= self.system.blocks.D[self.p_fixed_idx][:, gf].T @ p_fixed[self.p_fixed_idx]
        rhs_g -= self._A[gf][:, gd] @ g_fixed[gd]
        x = self.lu.solve(np.concatenate([rhs_e, rhs_g]))
        p = np.array(p_fixed, dtype=float)
        p[self.edge_free] = x[: len(self.edge_free)]
        g_out = np.array(g_fixed, dtype=float)
        g_out[gf] = x[len(self.edge_free):]
        u = np.zeros(lay.n_flux)
        for g, z in zip(self.groups, z_cells):
            if g.p_int.shape[1]:
                rI = rt[g.p_int] - np.einsum("cei,ce->ci", g.S_EI, p[g.p_edge])
                p[g.p_int] = (g.SII_inv @ rI[:, :, None])[:, :, 0]
            pl = np.concatenate([p[g.p_edge], p[g.p_int]], axis=1)
            u[g.u_idx] = z - np.einsum("cup,cp->cu", g.Minv_Bs, pl)
        return u, p, g_out


def solve(
    blocks: AssembledBlocks,
    layout: DofLayout,
    method: str = "condensed",
    gate: float = RESIDUAL_GATE,
) -> Solution:
    """Solve the coupled system with boundary data already attached.

    ``method`` is ``"condensed"`` (per-polygon elimination, then a sparse
    direct factorization) or ``"full"`` (sparse LU of the symmetrized
    monolithic system). The relative residual of the monolithic system is
    checked; one step of iterative refinement is taken if it exceeds
    ``gate`` and a ``SolverError`` is raised if it still does.
    """
    system = build_system(blocks, layout)
    t0 = time.perf_counter()
    stats: dict = {"method": method, "ndof": system.sizes}
    if method == "condensed":
        solver = CondensedSolver(system)

        # the solver takes the unsymmetrized rows and the prescribed values
        u, p, g = solver.solve(
            np.zeros(layout.n_flux),
            blocks.rhs_f + blocks.rhs_bc,
            blocks.rhs_fG[system.g_free],
            blocks.p_fixed,
            blocks.g_fixed,
        )
        x = system.pack(u, p, g)

        def solve_correction(r: np.ndarray) -> np.ndarray:
            ru, rp, rg = system.split(r)
            rp_full = np.zeros(layout.n_pressure)
            rp_full[system.p_free] = rp
            du, dp, dg = solver.solve(
                -ru, rp_full, rg, np.zeros(layout.n_pressure), np.zeros(layout.n_fracture)
            )
            return system.pack(du, dp, dg)

        stats["factor_nnz"] = solver.factor_nnz
    elif method == "full":
        try:
            lu = spla.splu(system.matrix.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        x = lu.solve(system.rhs)
        stats["factor_nnz"] = int(lu.L.nnz + lu.U.nnz)
        solve_correction = lu.solve
    else:
        raise ValueError(f"unknown method {method!r}")
    res = system.residual(x)
    stats["refined"] = False
    if not np.isfinite(res) or res > gate:
        x = x + solve_correction(system.rhs - system.matrix @ x)
        stats["refined"] = True
        res = system.residual(x)
    stats["residual"] = res
    stats["time"] = time.perf_counter() - t0
    if not np.isfinite(res) or res > gate:
        raise SolverError(f"relative residual {res:.3e} exceeds {gate:.0e} after refinement")
    u, p, g = system.expand(x)
    return Solution(
        u=DiscreteFunction(layout, "flux", u),
        p=DiscreteFunction(layout, "pressure", p),
        p_gamma=DiscreteFunction(layout, "fracture_pressure", g),
        stats=stats,
    )


def energy_identity(sol: Solution, blocks: AssembledBlocks) -> dict[str, float]:
    """Discrete energy balance obtained by testing with the solution itself.

    Returns the individual terms, the absolute residual
    |energy - (f, p_h) - <l f_G, p_G,h> + <g_N, p_h>_N| and the residual
    relative to the energy. It vanishes for homogeneous essential data;
    with prescribed pressures the lift makes it nonzero in general.
    """
    u, p, g = sol.u.coefficients, sol.p.coefficients, sol.p_gamma.coefficients
    terms = {
        "flux": float(u @ (blocks.M @ u)),
        "fracture": float(g @ (blocks.A_G @ g)),
        "average": float(p @ (blocks.C_avg @ p) + 2.0 * p @ (blocks.D @ g) + g @ (blocks.C_G @ g)),
        "jump": float(p @ (blocks.C_jump @ p)),
    }
    energy = sum(terms.values())
    work = float(blocks.rhs_f @ p + blocks.rhs_fG @ g)
    if blocks.rhs_bc is not None:
        work += float(blocks.rhs_bc @ p)
    residual = abs(energy - work)
    scale = max(abs(energy), abs(work))
    terms.update(
        energy=energy,
        work=work,
        residual=residual,
        relative=residual / scale if scale > 0 else residual,
    )
    return terms


@dataclass(frozen=True, eq=False)
class InfSupWitness:
    v: DiscreteFunction
    bvalue: float
    norm_q: float
    norm_v: float

    @property
    def ratio(self) -> float:
        return self.norm_v / self.norm_q if self.norm_q > 0 else 0.0


def dual_jump_moments(q: DiscreteFunction) -> np.ndarray:
    """Moments int_0^1 [q] L_j ds on every dual edge, shape (n_dual, k+1).

    [q] = q_lo - q_hi with lo/hi the triangle indices stored per dual edge;
    the stored dual normal points from lo to hi.
    """
    lay = q.layout
    sm = lay.mesh
    rule = line_rule(2 * lay.k + 2)
    L = legendre01(lay.n_edge, rule.points)
    out = np.zeros((sm.n_dual, lay.n_edge))
    for j, geom in enumerate((DUAL_A, DUAL_B)):
        pts = lay.ref.edge_points(geom, rule.points)
        vals = q.values(pts)  # (nt, nq), parameter from the vertex to nu
        mom = np.einsum("tq,q,qj->tj", vals, rule.weights, L)
        sign = sm.tri_dual_sign[:, j]
        np.add.at(out, sm.tri_dual[:, j], sign[:, None] * mom)
    return out


def infsup_witness(q: DiscreteFunction, blocks: AssembledBlocks | None = None) -> InfSupWitness:
    """Flux realizing b_h(v, q) = ||q||_Z^2 for a pressure function ``q``.

    Dual-edge moments are the jump moments of q weighted by minus the sum
    over both adjacent triangles of h_e / (2 |tau|); interior moments
    reproduce the moments of grad q against P^{k-1} vector fields.
    """
    from .analysis import norm_Xprime, norm_Z

    lay = q.layout
    sm, ref = lay.mesh, lay.ref
    ne = lay.n_edge
    coef = np.zeros(lay.n_flux)
    h = sm.dual_length()
    area = sm.tri_area()
    w = h / (2.0 * area[sm.dual_tris[:, 0]]) + h / (2.0 * area[sm.dual_tris[:, 1]])
    jm = dual_jump_moments(q) * h[:, None]  # <[q], L_j>_e including arclength
    coef[: sm.n_dual * ne] = (-w[:, None] * jm).ravel()

    xi = ref._tri_quad()[0]
    grad = q.gradients(xi)  # (nt, nq, 2)
    J = sm.jacobians()
    det = np.linalg.det(J)
    vhat = np.einsum("tij,tqj->tqi", np.linalg.inv(J) * det[:, None, None], grad)
    zeros = np.zeros((sm.n_triangles, len(ref._edge_quad()[0])))
    inner = ref.flux_functionals(zeros, zeros, vhat)[:, 2 * ne:]
    coef[lay.offset_u_interior:] = inner.ravel()
    v = DiscreteFunction(lay, "flux", coef)
    if blocks is not None:
        bvalue = float(q.coefficients @ (blocks.B @ coef))
    else:
        from .assembly import _divergence_pair

        bvalue = float(q.coefficients @ (_divergence_pair(lay)[0] @ coef))
    return InfSupWitness(v=v, bvalue=bvalue, norm_q=norm_Z(q), norm_v=norm_Xprime(v))
