"""Local staggered bases on the reference triangle.

The reference triangle is (0,0), (1,0), (0,1) = (nu, a, b). Its hypotenuse
a -> b is the primal edge; the legs a -> nu and b -> nu are the dual edges,
parameterised from the polygon vertex towards nu.

Pressure functions are mapped affinely, fluxes with the contravariant Piola
map v = J v_hat / det J. With the moment functionals used here the local
dof matrices are therefore identical on every triangle; only the global
sign conventions differ from triangle to triangle.
"""

from __future__ import annotations

import logging
from functools import cached_property, lru_cache

import numpy as np

from ..quadrature import dim_pk, legendre01, line_rule, monomial_integral_triangle, triangle_rule

log = logging.getLogger(__name__)

COND_WARN = 1e10

# reference edges: parameterisation x(s) = origin + s * direction
PRIMAL_EDGE = (np.array([1.0, 0.0]), np.array([-1.0, 1.0]))
DUAL_A = (np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
DUAL_B = (np.array([0.0, 1.0]), np.array([0.0, -1.0]))
# outward normal times edge length of the reference triangle
PRIMAL_NDS = np.array([1.0, 1.0])
DUAL_A_NDS = np.array([0.0, -1.0])
DUAL_B_NDS = np.array([-1.0, 0.0])


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def monomials(k: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Monomial values (n, m) and gradients (n, m, 2) at reference points."""
    x, y = xi[:, 0], xi[:, 1]
    exps = monomial_exponents(k)
    val = np.empty((len(xi), len(exps)))
    grad = np.zeros((len(xi), len(exps), 2))
    for i, (a, b) in enumerate(exps):
        val[:, i] = x**a * y**b
        if a:
            grad[:, i, 0] = a * x ** (a - 1) * y**b
        if b:
            grad[:, i, 1] = b * x**a * y ** (b - 1)
    return val, grad


@lru_cache(maxsize=None)
def reference_element(k: int) -> "ReferenceElement":
    return ReferenceElement(k)


class ReferenceElement:
    """Orthonormal frame, dof matrices and local bases for degree ``k``."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("degree k must be >= 1")
        self.k = k
        self.n_edge = k + 1
        self.n_int = dim_pk(k - 1)
        self.n_p = dim_pk(k)
        self.n_u = 2 * self.n_p
        exps = monomial_exponents(k)
        gram = np.array(
            [[monomial_integral_triangle(a1 + a2, b1 + b2) for (a2, b2) in exps] for (a1, b1) in exps]
        )
        R = np.linalg.cholesky(gram).T
        # columns: monomial coefficients of the orthonormal functions
        self.frame = np.linalg.inv(R)
        self.p_dofs = self._pressure_dof_matrix()
        self.u_dofs = self._flux_dof_matrix()
        self.p_cond = float(np.linalg.cond(self.p_dofs))
        self.u_cond = float(np.linalg.cond(self.u_dofs))
        for name, c in (("pressure", self.p_cond), ("flux", self.u_cond)):
            if c > COND_WARN:
                log.warning("reference %s dof matrix is ill-conditioned (cond=%.3g)", name, c)
        self.p_coef = np.linalg.inv(self.p_dofs)
        self.u_coef = np.linalg.inv(self.u_dofs)

    # ---- orthonormal frame -------------------------------------------------

    def phi(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        val, grad = monomials(self.k, xi)
        return val @ self.frame, np.einsum("qmd,mn->qnd", grad, self.frame)

    def _edge_quad(self):
        rule = line_rule(2 * self.k + 2)
        return rule.points, rule.weights, legendre01(self.n_edge, rule.points)

    def _tri_quad(self):
        rule = triangle_rule(2 * self.k + 2)
        return rule.points, rule.weights

    # ---- dof functionals applied to the frame ------------------------------

    def pressure_functionals(self, q_edge: np.ndarray, q_tri: np.ndarray) -> np.ndarray:
        """Pressure dofs from values on the primal-edge and triangle rules.

        ``q_edge`` has shape (..., n_edge_points) and ``q_tri`` shape
        (..., n_tri_points); the result has shape (..., n_p).
        """
        s, ws, L = self._edge_quad()
        xi, wt = self._tri_quad()
        psi = self.phi(xi)[0][:, : self.n_int]
        edge = np.einsum("...q,q,qj->...j", q_edge, ws, L)
        inner = 2.0 * np.einsum("...q,q,qm->...m", q_tri, wt, psi)
        return np.concatenate([edge, inner], axis=-1)

    def flux_functionals(
        self, vn_a: np.ndarray, vn_b: np.ndarray, v_tri: np.ndarray
    ) -> np.ndarray:
        """Flux dofs from reference normal traces on the two dual edges and
        reference vector values (..., n_tri_points, 2) on the triangle."""
        s, ws, L = self._edge_quad()
        xi, wt = self._tri_quad()
        psi = self.phi(xi)[0][:, : self.n_int]
        da = np.einsum("...q,q,qj->...j", vn_a, ws, L)
        db = np.einsum("...q,q,qj->...j", vn_b, ws, L)
        inner = 2.0 * np.einsum("...qd,q,qm->...dm", v_tri, wt, psi)
        inner = inner.reshape(inner.shape[:-2] + (2 * self.n_int,))
        return np.concatenate([da, db, inner], axis=-1)

    @staticmethod
    def edge_points(edge, s: np.ndarray) -> np.ndarray:
        origin, direction = edge
        return origin[None, :] + s[:, None] * direction[None, :]

    def _pressure_dof_matrix(self) -> np.ndarray:
        s, _, _ = self._edge_quad()
        xi, _ = self._tri_quad()
        pe = self.phi(self.edge_points(PRIMAL_EDGE, s))[0]
        pt = self.phi(xi)[0]
        return self.pressure_functionals(pe.T, pt.T).T

    def _flux_dof_matrix(self) -> np.ndarray:
        s, _, _ = self._edge_quad()
        xi, _ = self._tri_quad()
        pa = self.phi(self.edge_points(DUAL_A, s))[0]
        pb = self.phi(self.edge_points(DUAL_B, s))[0]
        pt = self.phi(xi)[0]
        cols = []
        for d in range(2):
            e = np.zeros(2)
            e[d] = 1.0
            vn_a = pa.T * (e @ DUAL_A_NDS)
            vn_b = pb.T * (e @ DUAL_B_NDS)
            v = pt.T[:, :, None] * e[None, None, :]
            cols.append(self.flux_functionals(vn_a, vn_b, v))
        return np.concatenate(cols, axis=0).T

    # ---- local bases ---------------------------------------------------------

    def pressure_basis(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (n, n_p) and reference gradients (n, n_p, 2)."""
        val, grad = self.phi(xi)
        return val @ self.p_coef, np.einsum("qid,il->qld", grad, self.p_coef)

    def flux_basis(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reference vector values (n, n_u, 2) and divergences (n, n_u)."""
        val, grad = self.phi(xi)
        n = self.n_p
        vec = np.zeros((len(xi), self.n_u, 2))
        div = np.zeros((len(xi), self.n_u))
        for d in range(2):
            c = self.u_coef[d * n:(d + 1) * n, :]
            vec[:, :, d] = val @ c
            div += grad[:, :, d] @ c
        return vec, div

    @cached_property
    def local_b(self) -> np.ndarray:
        """b_h on one triangle in the local bases, shape (n_p, n_u).

        Entry [m, l] = (v_l, grad q_m)_tau - sum over the two dual edges of
        <v_l . n_out, q_m>. Geometry drops out under the Piola map.
        """
        xi, wt = triangle_rule(2 * self.k).points, triangle_rule(2 * self.k).weights
        N, dN = self.pressure_basis(xi)
        V, _ = self.flux_basis(xi)
        vol = np.einsum("q,qld,qmd->ml", wt, V, dN)
        rule = line_rule(2 * self.k)
        edge = np.zeros_like(vol)
        for geom, nds in ((DUAL_A, DUAL_A_NDS), (DUAL_B, DUAL_B_NDS)):
            pts = self.edge_points(geom, rule.points)
            Ne, _ = self.pressure_basis(pts)
            Ve, _ = self.flux_basis(pts)
            edge += np.einsum("q,qld,d,qm->ml", rule.weights, Ve, nds, Ne)
        return vol - edge

    @cached_property
    def local_bstar(self) -> np.ndarray:
        """b_h^* on one triangle, shape (n_p, n_u).

        Entry [m, l] = <q_m, v_l . n_out>_primal edge - (q_m, div v_l)_tau.
        """
        xi, wt = triangle_rule(2 * self.k).points, triangle_rule(2 * self.k).weights
        N, _ = self.pressure_basis(xi)
        _, div = self.flux_basis(xi)
        vol = np.einsum("q,qm,ql->ml", wt, N, div)
        rule = line_rule(2 * self.k)
        pts = self.edge_points(PRIMAL_EDGE, rule.points)
        Ne, _ = self.pressure_basis(pts)
        Ve, _ = self.flux_basis(pts)
        edge = np.einsum("q,qld,d,qm->ml", rule.weights, Ve, PRIMAL_NDS, Ne)
        return edge - vol
