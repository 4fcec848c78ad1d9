import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdg.cases import CASES, fivespot_source, get_case

EXACT_CASES = [n for n in CASES if get_case(n).has_exact]


def pts(*xy):
    return np.array(xy, dtype=float).reshape(-1, 2)


def test_case_registry():
    assert set(CASES) == {"ex1-iso", "ex1-aniso", "ex3", "fivespot-permeable", "fivespot-impermeable"}
    with pytest.raises(ValueError, match="unknown case"):
        get_case("ex2")


def test_ex1_point_value():
    case = get_case("ex1-iso")
    assert case.exact_p(pts(0.25, 0.0), np.array([1]))[0] == pytest.approx(math.sin(1.0), abs=1e-15)
    assert case.exact_p(pts(0.75, 0.0), np.array([2]))[0] == pytest.approx(math.cos(3.0), abs=1e-15)


@pytest.mark.parametrize("name,kxx,kn", [("ex1-iso", 0.5, 0.01), ("ex1-aniso", 50.0, 1.0)])
def test_ex1_coefficients(name, kxx, kn):
    case = get_case(name)
    assert case.K[0, 0] == pytest.approx(kxx) and case.K[1, 1] == 1.0 and case.K[0, 1] == 0.0
    assert case.kappa_n == kn and case.kappa_star == 100.0 and case.ell == 0.01 and case.xi == 0.75
    assert case.K_gamma == pytest.approx(1.0)


@pytest.mark.parametrize("name", EXACT_CASES)
def test_interface_conditions(name):
    assert max(get_case(name).interface_residuals(50)) < 1e-12


def test_ex3_values():
    case = get_case("ex3")
    assert abs(case.exact_p(pts(0.25, 1.0), np.array([1]))[0]) < 1e-10
    # independently evaluated: (3/4) e^5 (cos 2 + sin 2)
    expected = 0.75 * math.exp(5.0) * (math.cos(2.0) + math.sin(2.0))
    assert expected == pytest.approx(54.89253, abs=5e-6)
    assert case.exact_pg(pts(0.5, 0.5))[0] == pytest.approx(expected, rel=1e-14)


def fd_grad(f, P, sub, h=1e-6):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return np.column_stack([(f(P + ex, sub) - f(P - ex, sub)) / (2 * h), (f(P + ey, sub) - f(P - ey, sub)) / (2 * h)])


def fd_div(u, P, sub, h=1e-6):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return (u(P + ex, sub)[:, 0] - u(P - ex, sub)[:, 0] + u(P + ey, sub)[:, 1] - u(P - ey, sub)[:, 1]) / (2 * h)


@pytest.mark.parametrize("name", EXACT_CASES)
def test_fields_against_finite_differences(name):
    case = get_case(name)
    rng = np.random.default_rng(0)
    P = rng.random((50, 2)) * 0.9 + 0.05
    sub = np.where(P[:, 0] < 0.5, 1, 2)
    scale = np.abs(case.exact_p(P, sub)).max() + 1.0
    g = case.exact_grad_p(P, sub)
    np.testing.assert_allclose(fd_grad(case.exact_p, P, sub), g, atol=1e-6 * scale * 100)
    np.testing.assert_allclose(case.exact_u(P, sub), -g @ case.K.T, rtol=1e-14)
    # div u = f
    np.testing.assert_allclose(fd_div(case.exact_u, P, sub), case.f(P, sub), atol=1e-5 * scale * 100)
    # fracture: derivative along y and the balance l f_G = -K_G p_G'' - [u.n]
    y = rng.random(20)
    F = np.column_stack([np.full(20, 0.5), y])
    d1 = (case.exact_pg(F + [0, 1e-6]) - case.exact_pg(F - [0, 1e-6])) / 2e-6
    np.testing.assert_allclose(d1, case.exact_pg_grad(F)[:, 1], atol=1e-6 * scale * 100)
    jump = case.exact_u(F, np.ones(20, int))[:, 0] - case.exact_u(F, np.full(20, 2))[:, 0]
    np.testing.assert_allclose(
        case.ell_f_gamma(F), -case.K_gamma * case.exact_pg_dd(F) - jump, rtol=1e-12, atol=1e-12
    )


def test_fivespot_source():
    assert fivespot_source(pts(0.0, 0.0))[0] == pytest.approx(10.1 * (math.tanh(40.0) - math.tanh(200 * (0.2 - math.sqrt(2)))))
    assert fivespot_source(pts(0.0, 0.0))[0] == pytest.approx(20.2, rel=1e-12)
    assert fivespot_source(pts(0.5, 0.5))[0] == 0.0
    assert fivespot_source(pts(1.0, 1.0))[0] == pytest.approx(-20.2, rel=1e-12)


@pytest.mark.parametrize("variant,kn,ks", [("permeable", 1.0, 100.0), ("impermeable", 0.01, 1.0)])
def test_fivespot_definition(variant, kn, ks):
    case = get_case(f"fivespot-{variant}")
    assert case.kappa_n == kn and case.kappa_star == ks and case.ell == 0.01
    assert np.array_equal(case.K, np.eye(2))
    assert not case.has_exact and case.neumann_subdomain == 1
    assert case.fracture == ((1.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        case.interface_residuals()


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0, 1), y=st.floats(0, 1))
def test_fivespot_source_symmetry(x, y):
    f = fivespot_source
    assert f(pts(x, y))[0] == pytest.approx(f(pts(y, x))[0], abs=1e-8)
    # antisymmetric under the point reflection through (1/2, 1/2)
    assert f(pts(x, y))[0] == pytest.approx(-f(pts(1 - x, 1 - y))[0], abs=1e-8)
