"""Discrete norms, the fracture Ritz projection, error reports and rates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .quadrature import lagrange_basis, line_rule, triangle_rule
from .spaces.functions import DiscreteFunction, interpolate_fracture, interpolate_pressure, map_points
from .spaces.layout import DofLayout
from .spaces.reference import DUAL_A, DUAL_B

if TYPE_CHECKING:
    from .assembly import Coefficients
    from .cases import CaseDefinition
    from .system import Solution


def _dual_traces(f: DiscreteFunction, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Traces from both triangles on every dual edge at parameters ``s``.

    Returns arrays (n_dual, nq[, 2]) for the lower and the higher triangle;
    the parameter runs from the polygon vertex to the interior point.
    """
    sm = f.layout.mesh
    shape = (sm.n_dual, len(s)) + ((2,) if f.which == "flux" else ())
    lo, hi = np.zeros(shape), np.zeros(shape)
    for j, geom in enumerate((DUAL_A, DUAL_B)):
        vals = f.values(f.layout.ref.edge_points(geom, s))
        is_lo = sm.tri_dual_sign[:, j] > 0
        lo[sm.tri_dual[is_lo, j]] = vals[is_lo]
        hi[sm.tri_dual[~is_lo, j]] = vals[~is_lo]
    return lo, hi


def _dual_weights(sm) -> tuple[np.ndarray, np.ndarray]:
    """Per dual edge: sum over adjacent triangles of h_e/(2|tau|) and of |tau|/(2 h_e)."""
    h = sm.dual_length()
    a = sm.tri_area()
    a1, a2 = a[sm.dual_tris[:, 0]], a[sm.dual_tris[:, 1]]
    return h / (2 * a1) + h / (2 * a2), a1 / (2 * h) + a2 / (2 * h)


def norm_Z(q: DiscreteFunction) -> float:
    """Broken gradient norm plus dual-edge jumps weighted by h_e/(2|tau|)."""
    if q.which != "pressure":
        raise ValueError("norm_Z is defined on the pressure space")
    lay = q.layout
    sm = lay.mesh
    rule = triangle_rule(2 * lay.k)
    grad = q.gradients(rule.points)
    det = 2.0 * sm.tri_area()
    vol = float(np.einsum("tqd,tqd,q,t->", grad, grad, rule.weights, det))
    er = line_rule(2 * lay.k + 2)
    lo, hi = _dual_traces(q, er.points)
    w, _ = _dual_weights(sm)
    jump2 = np.einsum("eq,q->e", (lo - hi) ** 2, er.weights) * sm.dual_length()
    return math.sqrt(max(vol + float(w @ jump2), 0.0))


def norm_Xprime(v: DiscreteFunction) -> float:
    """L2 norm plus dual-edge normal traces weighted by |tau|/(2 h_e)."""
    if v.which != "flux":
        raise ValueError("norm_Xprime is defined on the flux space")
    lay = v.layout
    sm = lay.mesh
    rule = triangle_rule(2 * lay.k)
    vals = v.values(rule.points)
    det = 2.0 * sm.tri_area()
    vol = float(np.einsum("tqd,tqd,q,t->", vals, vals, rule.weights, det))
    er = line_rule(2 * lay.k + 2)
    lo, _ = _dual_traces(v, er.points)
    vn = np.einsum("eqd,ed->eq", lo, sm.dual_normal)
    _, w = _dual_weights(sm)
    tr2 = np.einsum("eq,q->e", vn**2, er.weights) * sm.dual_length()
    return math.sqrt(max(vol + float(w @ tr2), 0.0))


# ---- fracture Ritz projection ------------------------------------------------


def _fracture_geometry(layout: DofLayout):
    sm = layout.mesh
    a = sm.points[sm.frac_vertices[:, 0]]
    b = sm.points[sm.frac_vertices[:, 1]]
    h = np.linalg.norm(b - a, axis=1)
    return a, b, h, (b - a) / h[:, None]


def fracture_stiffness(layout: DofLayout, K_gamma: np.ndarray):
    from .assembly import _csr, _block_indices

    rule = line_rule(2 * layout.k)
    _, dlag = lagrange_basis(layout.g_nodes, rule.points)
    stiff = np.einsum("q,qn,qm->nm", rule.weights, dlag, dlag)
    _, _, h, _ = _fracture_geometry(layout)
    K_gamma = np.broadcast_to(K_gamma, h.shape)
    rows, cols = _block_indices(layout.g_l2g, layout.g_l2g)
    n = layout.n_fracture
    return _csr(rows, cols, (K_gamma / h)[:, None, None] * stiff[None], (n, n))


def ritz_projection(
    layout: DofLayout,
    coeffs: "Coefficients",
    pg_grad: Callable[[np.ndarray], np.ndarray],
    pg: Callable[[np.ndarray], np.ndarray] | None = None,
) -> DiscreteFunction:
    """K_G-weighted H^1 projection of the exact fracture pressure onto W_h.

    ``pg_grad`` returns a gradient (n, 2) whose tangential component is the
    derivative along the fracture; ``pg`` supplies the tip values (zero if
    omitted).
    """
    a, b, h, t = _fracture_geometry(layout)
    KG = np.broadcast_to(coeffs.K_gamma, h.shape)
    rule = line_rule(2 * layout.k + 4)
    _, dlag = lagrange_basis(layout.g_nodes, rule.points)
    X = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    dt = np.einsum("fqd,fd->fq", np.asarray(pg_grad(X.reshape(-1, 2))).reshape(X.shape), t)
    loc = KG[:, None] * np.einsum("fq,q,qn->fn", dt, rule.weights, dlag)
    rhs = np.zeros(layout.n_fracture)
    np.add.at(rhs, layout.g_l2g.ravel(), loc.ravel())
    A = fracture_stiffness(layout, KG).tocsr()
    free, fixed = layout.free_fracture(), np.flatnonzero(layout.g_dirichlet)
    x = np.zeros(layout.n_fracture)
    if pg is not None:
        x[fixed] = np.asarray(pg(layout.fracture_node_xy()[fixed]), float)
    r = rhs[free] - A[free][:, fixed] @ x[fixed]
    Aff = A[free][:, free].tocsc()
    if len(free):
        try:
            x[free] = spla.spsolve(Aff, r)
        except RuntimeError as exc:
            raise ValueError("singular fracture stiffness: missing tip constraint") from exc
        if not np.all(np.isfinite(x)):
            raise ValueError("singular fracture stiffness: missing tip constraint")
    return DiscreteFunction(layout, "fracture_pressure", x)


# ---- errors ---------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorReport:
    """Errors of one discrete solution against the exact fields.

    For cases without an exact solution ``available`` is False and every
    error entry is NaN.
    """

    h: float
    ndof_u: int
    ndof_p: int
    ndof_pG: int
    err_u: float
    err_u_K: float
    err_p: float
    err_pG: float
    super_p: float
    super_pG: float
    jump_eta: float
    jump_alpha: float
    available: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


def bulk_l2_error(fh: DiscreteFunction, exact, degree: int, K_inv: np.ndarray | None = None) -> float:
    lay = fh.layout
    sm = lay.mesh
    rule = triangle_rule(degree)
    X = map_points(lay, rule.points)
    nt, nq = X.shape[:2]
    ex = np.asarray(exact(X.reshape(-1, 2), np.repeat(sm.tri_sub, nq)), float)
    ex = ex.reshape((nt, nq) + ex.shape[1:])
    d = ex - fh.values(rule.points)
    det = 2.0 * sm.tri_area()
    if d.ndim == 2:
        val = np.einsum("tq,q,t->", d * d, rule.weights, det)
    elif K_inv is None:
        val = np.einsum("tqd,tqd,q,t->", d, d, rule.weights, det)
    else:
        val = np.einsum("tqi,tij,tqj,q,t->", d, K_inv, d, rule.weights, det)
    return math.sqrt(max(float(val), 0.0))


def fracture_l2_error(gh: DiscreteFunction, exact, degree: int) -> float:
    lay = gh.layout
    a, b, h, _ = _fracture_geometry(lay)
    rule = line_rule(degree)
    X = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    ex = np.asarray(exact(X.reshape(-1, 2)), float).reshape(X.shape[:2])
    d = ex - gh.values(rule.points)
    return math.sqrt(float(np.einsum("fq,q,f->", d * d, rule.weights, h)))


def fracture_energy(gh: DiscreteFunction, K_gamma) -> float:
    """||K_G^{1/2} d/dt g||_{0,Gamma} of a fracture function."""
    lay = gh.layout
    _, _, h, _ = _fracture_geometry(lay)
    rule = line_rule(2 * lay.k)
    d = gh.gradients(rule.points)
    KG = np.broadcast_to(K_gamma, h.shape)
    return math.sqrt(float(np.einsum("fq,q,f->", d * d, rule.weights, h * KG)))


def interface_terms(e_p: DiscreteFunction, e_g: DiscreteFunction, coeffs: "Coefficients") -> tuple[float, float]:
    """sum ||eta^{-1/2} [e_p]||^2 and sum ||alpha^{-1/2}({e_p} - e_g)||^2 on the fracture."""
    lay = e_p.layout
    sm = lay.mesh
    if sm.n_fracture == 0:
        return 0.0, 0.0
    c = e_p.coefficients
    ne = lay.n_edge
    idx1 = lay.offset_frac + (2 * np.arange(sm.n_fracture)[:, None]) * ne + np.arange(ne)
    p1, p2 = c[idx1], c[idx1 + ne]
    h = sm.frac_length()
    eta = np.broadcast_to(coeffs.eta, h.shape)
    alpha = np.broadcast_to(coeffs.alpha, h.shape)
    jump = float(np.sum(h / eta * np.sum((p1 - p2) ** 2, axis=1)))
    # {e_p} - e_g via quadrature in the moment parameter
    rule = line_rule(2 * lay.k + 2)
    from .quadrature import legendre01

    L = legendre01(ne, rule.points)
    avg = 0.5 * (p1 + p2) @ L.T
    flip = sm.frac_vertices[:, 0] > sm.frac_vertices[:, 1]
    s_chain = np.where(flip[:, None], 1.0 - rule.points[None, :], rule.points[None, :])
    g = np.array([lagrange_basis(lay.g_nodes, s_chain[f])[0] @ e_g.coefficients[lay.g_l2g[f]]
                  for f in range(sm.n_fracture)])
    d = avg - g
    av = float(np.sum(h / alpha * (d * d @ rule.weights)))
    return jump, av


def compute_errors(
    sol: "Solution",
    case: "CaseDefinition",
    coeffs: "Coefficients",
    h: float | None = None,
) -> ErrorReport:
    """All error functionals, integrated with degree 2k + 4 rules."""
    lay = sol.p.layout
    sm = lay.mesh
    if not case.has_exact:
        nan = float("nan")
        return ErrorReport(
            float(h if h is not None else sm.h), lay.n_flux, lay.n_pressure, lay.n_fracture,
            *([nan] * 8), available=False,
        )
    deg = 2 * lay.k + 4
    K_inv = np.linalg.inv(coeffs.K[sm.tri_cell])
    err_u = bulk_l2_error(sol.u, case.exact_u, deg)
    err_uK = bulk_l2_error(sol.u, case.exact_u, deg, K_inv)
    err_p = bulk_l2_error(sol.p, case.exact_p, deg)
    err_g = fracture_l2_error(sol.p_gamma, case.exact_pg, deg) if sm.n_fracture else 0.0

    Ip = interpolate_pressure(lay, case.exact_p)
    e_p = DiscreteFunction(lay, "pressure", Ip.coefficients - sol.p.coefficients)
    super_p = norm_Z(e_p)
    if sm.n_fracture:
        R = ritz_projection(lay, coeffs, case.exact_pg_grad, case.exact_pg)
        e_g = DiscreteFunction(lay, "fracture_pressure", R.coefficients - sol.p_gamma.coefficients)
        super_g = fracture_energy(e_g, coeffs.K_gamma)
        jump, avg = interface_terms(e_p, e_g, coeffs)
    else:
        super_g, jump, avg = 0.0, 0.0, 0.0
    return ErrorReport(
        h=float(h if h is not None else sm.h),
        ndof_u=lay.n_flux,
        ndof_p=lay.n_pressure,
        ndof_pG=lay.n_fracture,
        err_u=err_u,
        err_u_K=err_uK,
        err_p=err_p,
        err_pG=err_g,
        super_p=super_p,
        super_pG=super_g,
        jump_eta=jump,
        jump_alpha=avg,
    )


# ---- rates -------------------------------------------------------------------------

EXACT = "exact"


def pair_rate(e0: float, e1: float, h0: float, h1: float):
    """Observed order between two levels; ``"exact"`` for zero errors."""
    if e0 == 0.0 or e1 == 0.0:
        return EXACT
    return math.log(e0 / e1) / math.log(h0 / h1)


def rates(reports: Sequence[ErrorReport], columns: Sequence[str] = ("err_u", "err_p", "err_pG")) -> dict:
    """Pairwise rates per column (length n-1) and a least-squares slope."""
    if len(reports) < 2:
        raise ValueError("at least two reports are needed")
    hs = [r.h for r in reports]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("reports must be ordered by decreasing h")
    out: dict = {}
    for col in columns:
        e = [getattr(r, col) for r in reports]
        out[col] = [pair_rate(e[i], e[i + 1], hs[i], hs[i + 1]) for i in range(len(e) - 1)]
        pos = [(h, v) for h, v in zip(hs, e) if v > 0]
        if len(pos) >= 2:
            x = np.log([p[0] for p in pos])
            y = np.log([p[1] for p in pos])
            out[col + "_lsq"] = float(np.polyfit(x, y, 1)[0])
        else:
            out[col + "_lsq"] = EXACT
    return out


def interpolation_errors(layout: DofLayout, case: "CaseDefinition") -> dict[str, float]:
    """L2 errors of I_h p, J_h u and pi_h p_G (degree 2k + 4 quadrature)."""
    from .spaces.functions import interpolate_flux

    deg = 2 * layout.k + 4
    out = {
        "p": bulk_l2_error(interpolate_pressure(layout, case.exact_p), case.exact_p, deg),
        "u": bulk_l2_error(interpolate_flux(layout, case.exact_u), case.exact_u, deg),
    }
    if layout.mesh.n_fracture:
        out["pG"] = fracture_l2_error(interpolate_fracture(layout, case.exact_pg), case.exact_pg, deg)
    return out
