"""Small self-checks of structural identities, used by ``fracdg check``.

Each check returns ``(name, ok, detail)``. They run on coarse meshes in a
few seconds and cover the identities that must hold to rounding error.
"""

from __future__ import annotations

import numpy as np

from .analysis import norm_Z
from .assembly import ProblemData, apply_boundary, assemble
from .cases import CASES, get_case
from .mesh import build_staggered, generate_uniform, generate_voronoi
from .quadrature import quadrature_check
from .spaces import DiscreteFunction, build_layout
from .system import energy_identity, infsup_witness, solve

Check = tuple[str, bool, str]


def _setup(kind: str = "rect", n: int = 4, k: int = 2, seed: int = 0):
    mesh = generate_voronoi(4 * n * n, 0.5, 20, seed) if kind == "cvt" else generate_uniform(kind, n, 0.5)
    sm = build_staggered(mesh)
    lay = build_layout(sm, k)
    coeffs = get_case("ex1-aniso").coefficients(sm)
    return sm, lay, coeffs


def check_quadrature() -> Check:
    worst = max(max(r["triangle_max_error"], r["line_max_error"]) for r in map(quadrature_check, range(1, 11)))
    return "quadrature exactness", worst <= 1e-13, f"max error {worst:.2e}"


def check_adjoint() -> Check:
    worst = 0.0
    for kind in ("rect", "cvt"):
        for k in (1, 2, 3):
            _, lay, coeffs = _setup(kind, 4, k)
            b = assemble(lay.mesh, lay, coeffs, ProblemData())
            diff = abs(b.B - b.Bstar.T).max()
            worst = max(worst, diff / abs(b.B).max())
    return "adjoint B = Bstar^T", worst <= 1e-12, f"relative max {worst:.2e}"


def check_interface() -> Check:
    worst = max(max(get_case(n).interface_residuals()) for n in CASES if get_case(n).has_exact)
    return "manufactured interface conditions", worst <= 1e-12, f"max residual {worst:.2e}"


def check_zero_data() -> Check:
    _, lay, coeffs = _setup("cvt", 4, 2)
    data = ProblemData()
    blocks = apply_boundary(assemble(lay.mesh, lay, coeffs, data), lay, data)
    sol = solve(blocks, lay)
    worst = max(np.abs(f.coefficients).max() for f in (sol.u, sol.p, sol.p_gamma))
    return "zero data gives zero solution", worst <= 1e-12, f"max coefficient {worst:.2e}"


def check_energy() -> Check:
    _, lay, coeffs = _setup("cvt", 4, 2)
    data = ProblemData(f=lambda P, s: np.sin(3 * P[:, 0]) + P[:, 1], ell_f_gamma=lambda P: 1.0 + P[:, 1])
    blocks = apply_boundary(assemble(lay.mesh, lay, coeffs, data), lay, data)
    rel = energy_identity(solve(blocks, lay), blocks)["relative"]
    return "energy identity", rel <= 1e-10, f"relative residual {rel:.2e}"


def check_infsup() -> Check:
    _, lay, coeffs = _setup("rect", 4, 2)
    rng = np.random.default_rng(0)
    q = DiscreteFunction(lay, "pressure", rng.standard_normal(lay.n_pressure))
    wit = infsup_witness(q)
    nz2 = norm_Z(q) ** 2
    rel = abs(wit.bvalue - nz2) / nz2
    return "inf-sup witness identity", rel <= 1e-11, f"relative gap {rel:.2e}, ratio {wit.ratio:.3f}"


CHECKS = (check_quadrature, check_adjoint, check_interface, check_zero_data, check_energy, check_infsup)


def run_all() -> list[Check]:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn())
        except Exception as exc:  # a crashing check is a failed check
            out.append((fn.__name__, False, f"{type(exc).__name__}: {exc}"))
    return out


__all__ = ["CHECKS", "run_all"]
