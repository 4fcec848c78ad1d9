"""Discrete functions, their evaluation, and the interpolation operators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from ..quadrature import lagrange_basis
from .layout import DofLayout
from .reference import DUAL_A, DUAL_A_NDS, DUAL_B, DUAL_B_NDS, PRIMAL_EDGE

# exact fields take points (n, 2) and subdomain labels (n,)
ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
FractureField = Callable[[np.ndarray], np.ndarray]

KINDS = ("pressure", "flux", "fracture_pressure")


def map_points(layout: DofLayout, xi: np.ndarray) -> np.ndarray:
    """Physical images (nt, nq, 2) of reference points on every triangle."""
    sm = layout.mesh
    p0 = sm.points[sm.triangles[:, 0]]
    return p0[:, None, :] + np.einsum("tij,qj->tqi", sm.jacobians(), xi)


def _field_on(layout: DofLayout, field, X: np.ndarray) -> np.ndarray:
    nt, nq = X.shape[:2]
    sub = np.repeat(layout.mesh.tri_sub, nq)
    out = np.asarray(field(X.reshape(-1, 2), sub), dtype=float)
    return out.reshape((nt, nq) + out.shape[1:])


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Coefficient vector of a member of S_h, V_h or W_h."""

    layout: DofLayout
    which: str
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        if self.which not in KINDS:
            raise ValueError(f"unknown space {self.which!r}")
        c = np.array(self.coefficients, dtype=float)
        expected = {
            "pressure": self.layout.n_pressure,
            "flux": self.layout.n_flux,
            "fracture_pressure": self.layout.n_fracture,
        }[self.which]
        if c.shape != (expected,):
            raise ValueError(f"{self.which} vector has shape {c.shape}, expected ({expected},)")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    # ---- local coefficients ---------------------------------------------

    def local(self) -> np.ndarray:
        """Coefficients per triangle in the local basis, sign-corrected."""
        lay = self.layout
        if self.which == "pressure":
            return self.coefficients[lay.p_l2g] * lay.p_sign
        if self.which == "flux":
            return self.coefficients[lay.u_l2g] * lay.u_sign
        return self.coefficients[lay.g_l2g]

    # ---- evaluation on reference points -----------------------------------

    def values(self, xi: np.ndarray) -> np.ndarray:
        """Values at reference points of every triangle.

        Pressure: (nt, nq). Flux: (nt, nq, 2) physical vectors. For the
        fracture space ``xi`` is a 1D parameter array and the result has
        shape (nf, nq) along each fracture edge in chain direction.
        """
        lay = self.layout
        c = self.local()
        if self.which == "pressure":
            N, _ = lay.ref.pressure_basis(xi)
            return c @ N.T
        if self.which == "flux":
            V, _ = lay.ref.flux_basis(xi)
            vhat = np.einsum("tl,qld->tqd", c, V)
            J = lay.mesh.jacobians()
            det = np.linalg.det(J)
            return np.einsum("tij,tqj->tqi", J, vhat) / det[:, None, None]
        val, _ = lagrange_basis(lay.g_nodes, np.asarray(xi, dtype=float))
        return c @ val.T

    def gradients(self, xi: np.ndarray) -> np.ndarray:
        """Pressure gradients (nt, nq, 2), or fracture tangential
        derivatives (nf, nq) with respect to arclength."""
        lay = self.layout
        c = self.local()
        if self.which == "pressure":
            _, dN = lay.ref.pressure_basis(xi)
            g = np.einsum("tl,qld->tqd", c, dN)
            Jinv = np.linalg.inv(lay.mesh.jacobians())
            return np.einsum("tji,tqj->tqi", Jinv, g)
        if self.which == "fracture_pressure":
            _, der = lagrange_basis(lay.g_nodes, np.asarray(xi, dtype=float))
            return (c @ der.T) / lay.mesh.frac_length()[:, None]
        raise ValueError("gradients are defined for pressure spaces only")

    def divergence(self, xi: np.ndarray) -> np.ndarray:
        if self.which != "flux":
            raise ValueError("divergence is defined for flux functions only")
        lay = self.layout
        _, div = lay.ref.flux_basis(xi)
        det = np.linalg.det(lay.mesh.jacobians())
        return (self.local() @ div.T) / det[:, None]

    # ---- point sampling ------------------------------------------------------

    def sample(self, points: np.ndarray, prefer_subdomain: int | None = None) -> np.ndarray:
        """Point values at physical locations (bulk spaces only)."""
        if self.which == "fracture_pressure":
            raise ValueError("sample the fracture pressure with sample_fracture")
        lay = self.layout
        tri, xi = locate(lay.mesh, np.asarray(points, float), prefer_subdomain)
        c = self.local()[tri]
        if self.which == "pressure":
            N, _ = lay.ref.pressure_basis(xi)
            return np.einsum("pl,pl->p", c, N)
        V, _ = lay.ref.flux_basis(xi)
        vhat = np.einsum("pl,pld->pd", c, V)
        J = lay.mesh.jacobians()[tri]
        return np.einsum("pij,pj->pi", J, vhat) / np.linalg.det(J)[:, None]

    def sample_fracture(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Points and values at chain arclength fractions ``s`` in [0, 1]."""
        if self.which != "fracture_pressure":
            raise ValueError("not a fracture function")
        sm = self.layout.mesh
        lengths = sm.frac_length()
        cum = np.concatenate([[0.0], np.cumsum(lengths)]) / lengths.sum()
        s = np.clip(np.asarray(s, float), 0.0, 1.0)
        f = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, sm.n_fracture - 1)
        loc = (s - cum[f]) / (cum[f + 1] - cum[f])
        val, _ = lagrange_basis(self.layout.g_nodes, loc)
        c = self.local()[f]
        a = sm.points[sm.frac_vertices[f, 0]]
        b = sm.points[sm.frac_vertices[f, 1]]
        return a + loc[:, None] * (b - a), np.einsum("nj,nj->n", val, c)

    # ---- export -------------------------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        """Write (entity id, local coefficients) rows."""
        c = self.local()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            label = "fracture_edge" if self.which == "fracture_pressure" else "triangle"
            w.writerow([label] + [f"c{i}" for i in range(c.shape[1])])
            for t, row in enumerate(c):
                w.writerow([t] + [repr(float(v)) for v in row])

    def samples_to_csv(self, path: str | Path, points: np.ndarray) -> None:
        """Write point-sampled (x, y, value) rows; flux writes both components."""
        pts = np.asarray(points, float)
        vals = self.sample(pts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.which == "flux":
                w.writerow(["x", "y", "ux", "uy"])
                for p, v in zip(pts, vals):
                    w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(v[0])), repr(float(v[1]))])
            else:
                w.writerow(["x", "y", "value"])
                for p, v in zip(pts, vals):
                    w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(v))])


def locate(sm, points: np.ndarray, prefer_subdomain: int | None = None, tol: float = 1e-12):
    """Triangle index and reference coordinates for each physical point.

    Candidates are the triangles with the nearest centroids; points not
    found among them are checked against every triangle.
    """
    points = np.atleast_2d(np.asarray(points, float))
    p0 = sm.points[sm.triangles[:, 0]]
    Jinv = np.linalg.inv(sm.jacobians())
    nt = sm.n_triangles
    n_near = min(nt, 24)
    tree = cKDTree(sm.points[sm.triangles].mean(axis=1))
    _, near = tree.query(points, k=n_near)
    near = np.asarray(near).reshape(len(points), n_near)
    tri = np.empty(len(points), dtype=int)
    xis = np.empty((len(points), 2))

    def pick(x, cand):
        xi = np.einsum("tij,tj->ti", Jinv[cand], x[None, :] - p0[cand])
        slack = np.minimum(np.minimum(xi[:, 0], xi[:, 1]), 1.0 - xi[:, 0] - xi[:, 1])
        inside = np.flatnonzero(slack >= -tol)
        if len(inside) == 0:
            return None
        if prefer_subdomain is not None:
            match = inside[sm.tri_sub[cand[inside]] == prefer_subdomain]
            if len(match):
                inside = match
        j = int(inside[np.argmax(slack[inside])])
        return int(cand[j]), xi[j]

    everything = np.arange(nt)
    for i, x in enumerate(points):
        hit = pick(x, near[i])
        if hit is None or (prefer_subdomain is not None and sm.tri_sub[hit[0]] != prefer_subdomain):
            hit = pick(x, everything) or hit
        if hit is None:
            raise ValueError(f"point {x} lies outside the mesh")
        tri[i], xis[i] = hit
    return tri, xis


def _scatter_mean(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    acc = np.zeros(n)
    cnt = np.zeros(n)
    np.add.at(acc, idx.ravel(), vals.ravel())
    np.add.at(cnt, idx.ravel(), 1.0)
    cnt[cnt == 0] = 1.0
    return acc / cnt


def pressure_moments(layout: DofLayout, p_exact: ScalarField) -> np.ndarray:
    """Local SD1/SD2/SD3 moments (nt, n_p) of an exact pressure field."""
    ref = layout.ref
    s, _, _ = ref._edge_quad()
    xi, _ = ref._tri_quad()
    qe = _field_on(layout, p_exact, map_points(layout, ref.edge_points(PRIMAL_EDGE, s)))
    qt = _field_on(layout, p_exact, map_points(layout, xi))
    return ref.pressure_functionals(qe, qt)


def flux_moments(layout: DofLayout, u_exact: VectorField) -> np.ndarray:
    """Local VD1/VD2 moments (nt, n_u) of an exact flux field."""
    ref = layout.ref
    s, _, _ = ref._edge_quad()
    xi, _ = ref._tri_quad()
    J = layout.mesh.jacobians()
    det = np.linalg.det(J)
    # contravariant pull-back v_hat = det J^{-1} u
    back = np.linalg.inv(J) * det[:, None, None]

    def pulled(pts):
        u = _field_on(layout, u_exact, map_points(layout, pts))
        return np.einsum("tij,tqj->tqi", back, u)

    vn_a = pulled(ref.edge_points(DUAL_A, s)) @ DUAL_A_NDS
    vn_b = pulled(ref.edge_points(DUAL_B, s)) @ DUAL_B_NDS
    return ref.flux_functionals(vn_a, vn_b, pulled(xi))


def interpolate_pressure(layout: DofLayout, p_exact: ScalarField) -> DiscreteFunction:
    """I_h: match every edge (both fracture sides) and interior moment."""
    loc = pressure_moments(layout, p_exact) * layout.p_sign
    return DiscreteFunction(layout, "pressure", _scatter_mean(layout.n_pressure, layout.p_l2g, loc))


def interpolate_flux(layout: DofLayout, u_exact: VectorField) -> DiscreteFunction:
    """J_h: match dual-edge normal moments and interior vector moments."""
    loc = flux_moments(layout, u_exact) * layout.u_sign
    return DiscreteFunction(layout, "flux", _scatter_mean(layout.n_flux, layout.u_l2g, loc))


def interpolate_fracture(layout: DofLayout, pg_exact: FractureField | None) -> DiscreteFunction:
    """pi_h: nodal interpolation at the fracture Gauss-Lobatto nodes."""
    if pg_exact is None or layout.n_fracture == 0:
        return DiscreteFunction(layout, "fracture_pressure", np.zeros(layout.n_fracture))
    vals = np.asarray(pg_exact(layout.fracture_node_xy()), dtype=float)
    return DiscreteFunction(layout, "fracture_pressure", vals)
