import numpy as np
import pytest
import scipy.sparse as sp

from fracdg.assembly import (
    BoundaryConfigError,
    Coefficients,
    ProblemData,
    apply_boundary,
    assemble,
    export_coo,
)
from fracdg.cases import get_case
from fracdg.mesh import PolygonalMesh, build_staggered, generate_uniform, generate_voronoi
from fracdg.spaces import build_layout, interpolate_pressure
from fracdg.study import build_mesh


def setup(kind="cvt", n=3, k=2, case="ex1-aniso"):
    mesh = generate_voronoi(4 * n * n, 0.5, 20, 1) if kind == "cvt" else generate_uniform(kind, n, 0.5)
    sm = build_staggered(mesh)
    lay = build_layout(sm, k)
    coeffs = get_case(case).coefficients(sm)
    return sm, lay, coeffs


def sym_gap(A):
    return abs(A - A.T).max() / max(abs(A).max(), 1e-300)


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("kind", ["rect", "cvt"])
def test_adjoint_identity(kind, k):
    sm, lay, coeffs = setup(kind, 4, k)
    b = assemble(sm, lay, coeffs)
    assert b.B.shape == (lay.n_pressure, lay.n_flux)
    assert b.Bstar.shape == (lay.n_flux, lay.n_pressure)
    assert abs(b.B - b.Bstar.T).max() <= 1e-12 * abs(b.B).max()


@pytest.mark.parametrize("k", [1, 3])
def test_symmetric_blocks(k):
    sm, lay, coeffs = setup("cvt", 3, k)
    b = assemble(sm, lay, coeffs)
    for A in (b.M, b.A_G, b.C_avg, b.C_jump, b.C_G):
        assert sym_gap(A) <= 1e-14


def test_definiteness():
    sm, lay, coeffs = setup("cvt", 2, 2)
    b = assemble(sm, lay, coeffs)
    assert np.linalg.eigvalsh(b.M.toarray()).min() > 0
    assert np.linalg.eigvalsh(b.C_jump.toarray()).min() > -1e-12
    assert np.linalg.eigvalsh(b.C_avg.toarray()).min() > -1e-12
    assert np.linalg.eigvalsh(b.A_fracture.toarray()).min() > 0


def test_fracture_block_shapes():
    sm, lay, coeffs = setup("rect", 4, 2)
    b = assemble(sm, lay, coeffs)
    assert b.D.shape == (lay.n_pressure, lay.n_fracture)
    assert b.A_G.shape == b.C_G.shape == (lay.n_fracture, lay.n_fracture)
    # only SD3 rows couple to the fracture
    rows = np.unique(b.D.nonzero()[0])
    assert rows.min() >= lay.offset_frac and rows.max() < lay.offset_interior


def test_permeability_scaling():
    sm, lay, coeffs = setup("cvt", 2, 2)
    M1 = assemble(sm, lay, coeffs).M
    M4 = assemble(sm, lay, coeffs.scaled(4.0)).M
    assert abs(M4 * 4.0 - M1).max() <= 1e-13 * abs(M1).max()


def test_iso_coefficients():
    sm, _, _ = setup("rect", 2, 1)
    c = get_case("ex1-iso").coefficients(sm)
    assert c.eta[0] == pytest.approx(1.0)
    assert c.alpha[0] == pytest.approx(0.125)
    assert c.K[0, 0, 0] == pytest.approx(0.5)
    assert c.K_gamma[0] == pytest.approx(1.0)


@pytest.mark.parametrize(
    "kw",
    [
        {"K": np.array([[[1.0, 0.1], [0.0, 1.0]]])},
        {"K": np.array([[[-1.0, 0.0], [0.0, 1.0]]])},
        {"kappa_n": [0.0]},
        {"ell": [-1.0]},
        {"xi": 0.5},
        {"xi": 1.2},
    ],
)
def test_coefficient_validation(kw):
    base = dict(K=np.eye(2)[None], kappa_n=[1.0], kappa_star=[1.0], ell=[0.01], xi=0.75)
    base.update(kw)
    with pytest.raises(ValueError):
        Coefficients(**base)


def test_assemble_rejects_mismatch():
    sm, lay, coeffs = setup("rect", 2, 1)
    sm2 = build_staggered(generate_uniform("rect", 4, 0.5))
    with pytest.raises(ValueError):
        assemble(sm2, lay, coeffs)
    with pytest.raises(ValueError):
        assemble(sm2, build_layout(sm2, 1), coeffs)


def test_all_neumann_is_rejected():
    mesh = generate_uniform("rect", 2, 0.5)
    edges = frozenset(map(tuple, map(sorted, mesh.boundary_edges())))
    mesh = PolygonalMesh(mesh.vertices, mesh.cells, mesh.fracture, edges)
    sm = build_staggered(mesh)
    lay = build_layout(sm, 1)
    b = assemble(sm, lay, get_case("ex1-iso").coefficients(sm))
    with pytest.raises(BoundaryConfigError):
        apply_boundary(b, lay)


def test_zero_dirichlet_gives_no_lift():
    sm, lay, coeffs = setup("rect", 2, 1)
    b = apply_boundary(assemble(sm, lay, coeffs), lay, ProblemData(p0=lambda P, s: 0 * P[:, 0]))
    assert not b.p_fixed.any() and not b.rhs_bc.any() and not b.g_fixed.any()
    assert b.bc_applied


def test_dirichlet_moments_of_linear_data():
    sm, lay, coeffs = setup("rect", 2, 1)
    b = apply_boundary(assemble(sm, lay, coeffs), lay, ProblemData(p0=lambda P, s: P[:, 0] + 2 * P[:, 1]))
    for e in np.flatnonzero(sm.primal_dirichlet):
        va, vb = sm.points[sm.primal_vertices[e]]
        mean = 0.5 * ((va[0] + 2 * va[1]) + (vb[0] + 2 * vb[1]))
        m0, m1 = b.p_fixed[lay.primal_dofs(e)]
        assert m0 == pytest.approx(mean, abs=1e-14)
        slope = (vb[0] + 2 * vb[1]) - (va[0] + 2 * va[1])
        # the degree-one orthonormal Legendre moment of s -> s is 1 / (2 sqrt 3)
        assert m1 == pytest.approx(slope / (2 * np.sqrt(3)), abs=1e-14)


def test_fivespot_boundary_split():
    case = get_case("fivespot-permeable")
    sm = build_staggered(build_mesh("rect", 8, case))
    mid = sm.points[sm.primal_vertices].mean(axis=1)
    d, nm = sm.primal_dirichlet, sm.primal_neumann
    assert d.any() and nm.any() and not (d & nm).any()
    on_top_right = np.isclose(mid[:, 0], 1.0) | np.isclose(mid[:, 1], 1.0)
    on_bottom_left = np.isclose(mid[:, 0], 0.0) | np.isclose(mid[:, 1], 0.0)
    boundary = sm.primal_tris[:, 1] < 0
    # p = 0 exactly on the upper-right part of the boundary
    assert np.array_equal(d, boundary & (mid.sum(1) > 1.0))
    assert np.array_equal(nm, boundary & (mid.sum(1) < 1.0))
    assert on_top_right[d].all() and on_bottom_left[nm].all()


def test_bilinear_form_of_constants():
    sm, lay, coeffs = setup("cvt", 3, 2)
    b = assemble(sm, lay, coeffs)
    one = interpolate_pressure(lay, lambda P, s: np.ones(len(P))).coefficients
    # b_h(v, 1) = 0 for every v: no jumps and no gradient
    assert abs(b.B.T @ one).max() <= 1e-13


def test_load_of_constant_source():
    sm, lay, coeffs = setup("cvt", 3, 2)
    b = assemble(sm, lay, coeffs, ProblemData(f=lambda P, s: np.ones(len(P))))
    one = interpolate_pressure(lay, lambda P, s: np.ones(len(P))).coefficients
    # (f, q) with q = 1 is the area of the square
    assert one @ b.rhs_f == pytest.approx(1.0, rel=1e-13)


def test_export_coo(tmp_path):
    A = sp.csr_matrix(np.array([[1.5, 0.0], [0.0, -2.0], [3.0, 0.0]]))
    export_coo(A, tmp_path / "a.mtx")
    lines = (tmp_path / "a.mtx").read_text().splitlines()
    assert lines[0] == "% 3 2 3"
    assert lines[1:] == ["0 0 1.5", "1 1 -2.0", "2 0 3.0"]
