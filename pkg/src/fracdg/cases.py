"""Registered test problems: manufactured solutions and the quarter five-spot.

Manufactured cases share the separable form p_i(x, y) = X_i(x) Y(y) on the
two halves of the unit square split by the vertical fracture x = 1/2, with
X_1 = sin(4x) and X_2 = cos(4x). Bulk and fracture sources are derived
from the exact fields by hand-coded derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import Coefficients, ProblemData
from .mesh.staggered import StaggeredMesh

Field = Callable[..., np.ndarray]

XI = 0.75
ELL = 0.01
KAPPA_STAR = 100.0
FRACTURE_X = 0.5
INTERFACE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CaseDefinition:
    """Coefficients, exact fields and data of one problem.

    Bulk fields take points (n, 2) and subdomain labels (n,); fracture
    fields take points only. ``exact_pg_grad`` returns a gradient whose
    tangential component is the derivative along the fracture.
    """

    name: str
    K: np.ndarray
    kappa_n: float
    kappa_star: float
    ell: float
    xi: float
    f: Field
    ell_f_gamma: Field | None
    fracture: tuple[tuple[float, float], tuple[float, float]]
    has_exact: bool = False
    exact_p: Field | None = None
    exact_grad_p: Field | None = None
    exact_u: Field | None = None
    exact_pg: Field | None = None
    exact_pg_grad: Field | None = None
    exact_pg_dd: Field | None = None
    p0: Field | None = None
    g_gamma: Field | None = None
    neumann_subdomain: int | None = None
    meta: dict = field(default_factory=dict)

    def coefficients(self, mesh: StaggeredMesh) -> Coefficients:
        return Coefficients.uniform(mesh, self.K, self.kappa_n, self.kappa_star, self.ell, self.xi)

    @property
    def eta(self) -> float:
        return self.ell / self.kappa_n

    @property
    def alpha(self) -> float:
        return self.eta * (self.xi / 2.0 - 0.25)

    @property
    def K_gamma(self) -> float:
        return self.kappa_star * self.ell

    def data(self) -> ProblemData:
        return ProblemData(
            f=self.f,
            ell_f_gamma=self.ell_f_gamma,
            p0=self.p0,
            neumann_flux=None,
            g_gamma=self.g_gamma,
        )

    def fracture_points(self, n: int = 20) -> np.ndarray:
        a, b = (np.asarray(p, float) for p in self.fracture)
        s = (np.arange(n) + 0.5) / n
        return a + s[:, None] * (b - a)

    def interface_residuals(self, n: int = 20) -> tuple[float, float]:
        """max |eta {u.n} - [p]| and max |alpha [u.n] - ({p} - p_G)| on Gamma."""
        if not self.has_exact:
            raise ValueError(f"case {self.name!r} has no exact solution")
        X = self.fracture_points(n)
        a, b = (np.asarray(p, float) for p in self.fracture)
        t = (b - a) / np.linalg.norm(b - a)
        nrm = np.array([t[1], -t[0]])
        one, two = np.ones(n, int), 2 * np.ones(n, int)
        p1, p2 = self.exact_p(X, one), self.exact_p(X, two)
        un1, un2 = self.exact_u(X, one) @ nrm, self.exact_u(X, two) @ nrm
        pg = self.exact_pg(X)
        r1 = self.eta * 0.5 * (un1 + un2) - (p1 - p2)
        r2 = self.alpha * (un1 - un2) - (0.5 * (p1 + p2) - pg)
        return float(np.abs(r1).max()), float(np.abs(r2).max())


# ---- separable manufactured family ------------------------------------------


def _x_parts(x: np.ndarray, sub: np.ndarray):
    """X, X', X'' with X = sin(4x) on subdomain 1 and cos(4x) on subdomain 2."""
    s, c = np.sin(4 * x), np.cos(4 * x)
    one = sub == 1
    X = np.where(one, s, c)
    dX = np.where(one, 4 * c, -4 * s)
    return X, dX, -16.0 * X


def _separable_case(name: str, kappa_n: float, Y: Callable, meta: dict) -> CaseDefinition:
    """Y(y) returns (Y, Y', Y'')."""
    Kxx = kappa_n / (2.0 * ELL)
    K = np.diag([Kxx, 1.0])
    KG = KAPPA_STAR * ELL
    amp = 0.75 * (math.cos(2.0) + math.sin(2.0))

    def exact_p(P, sub):
        X, _, _ = _x_parts(P[:, 0], sub)
        return X * Y(P[:, 1])[0]

    def exact_grad_p(P, sub):
        X, dX, _ = _x_parts(P[:, 0], sub)
        y, dy, _ = Y(P[:, 1])
        return np.column_stack([dX * y, X * dy])

    def exact_u(P, sub):
        g = exact_grad_p(P, sub)
        return -g @ K.T

    def f(P, sub):
        X, _, ddX = _x_parts(P[:, 0], sub)
        y, _, ddy = Y(P[:, 1])
        return -(Kxx * ddX * y + X * ddy)

    def exact_pg(P):
        return amp * Y(P[:, 1])[0]

    def exact_pg_grad(P):
        return np.column_stack([np.zeros(len(P)), amp * Y(P[:, 1])[1]])

    def exact_pg_dd(P):
        return amp * Y(P[:, 1])[2]

    def ell_f_gamma(P):
        # l f_G = -K_G p_G'' - [u.n] with n = (1, 0)
        y = Y(P[:, 1])[0]
        x = np.full(len(P), FRACTURE_X)
        _, d1, _ = _x_parts(x, np.ones(len(P), int))
        _, d2, _ = _x_parts(x, np.full(len(P), 2))
        jump_un = -Kxx * (d1 - d2) * y
        return -KG * exact_pg_dd(P) - jump_un

    case = CaseDefinition(
        name=name,
        K=K,
        kappa_n=kappa_n,
        kappa_star=KAPPA_STAR,
        ell=ELL,
        xi=XI,
        f=f,
        ell_f_gamma=ell_f_gamma,
        fracture=((FRACTURE_X, 0.0), (FRACTURE_X, 1.0)),
        has_exact=True,
        exact_p=exact_p,
        exact_grad_p=exact_grad_p,
        exact_u=exact_u,
        exact_pg=exact_pg,
        exact_pg_grad=exact_pg_grad,
        exact_pg_dd=exact_pg_dd,
        p0=exact_p,
        g_gamma=exact_pg,
        meta=meta,
    )
    r1, r2 = case.interface_residuals()
    if max(r1, r2) > INTERFACE_TOL:
        raise ValueError(f"case {name}: interface conditions violated ({r1:.2e}, {r2:.2e})")
    return case


def _cos_profile(y):
    c, s = np.cos(np.pi * y), np.sin(np.pi * y)
    return c, -np.pi * s, -np.pi**2 * c


def _layer_profile(y):
    e, s, c = np.exp(10 * y), np.sin(np.pi * y), np.cos(np.pi * y)
    return (
        e * s,
        e * (10 * s + np.pi * c),
        e * ((100 - np.pi**2) * s + 20 * np.pi * c),
    )


EX1_VARIANTS = {"isotropic": 0.01, "anisotropic": 1.0}
FIVESPOT_VARIANTS = {"permeable": (1.0, 100.0), "impermeable": (1e-2, 1.0)}


def case_ex1(variant: str = "isotropic") -> CaseDefinition:
    """Smooth solution with a pressure jump across the vertical fracture."""
    if variant not in EX1_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    name = "ex1-iso" if variant == "isotropic" else "ex1-aniso"
    return _separable_case(name, EX1_VARIANTS[variant], _cos_profile, {"variant": variant})


def case_ex3() -> CaseDefinition:
    """Boundary layer near y = 1, with the isotropic ex1 coefficients."""
    return _separable_case("ex3", EX1_VARIANTS["isotropic"], _layer_profile, {"variant": "isotropic"})


def fivespot_source(P, sub=None):
    r0 = np.hypot(P[:, 0], P[:, 1])
    r1 = np.hypot(P[:, 0] - 1.0, P[:, 1] - 1.0)
    return 10.1 * (np.tanh(200 * (0.2 - r0)) - np.tanh(200 * (0.2 - r1)))


def case_fivespot(variant: str = "permeable") -> CaseDefinition:
    """Injection at (0,0), production at (1,1), diagonal fracture x + y = 1.

    The lower-left part (subdomain 1) carries a no-flow condition, the
    upper-right part p = 0. The fracture pressure is zero at both tips.
    """
    if variant not in FIVESPOT_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    kn, ks = FIVESPOT_VARIANTS[variant]
    return CaseDefinition(
        name=f"fivespot-{variant}",
        K=np.eye(2),
        kappa_n=kn,
        kappa_star=ks,
        ell=ELL,
        xi=XI,
        f=fivespot_source,
        ell_f_gamma=None,
        # subdomain 1 (lower left) lies to the left of (1,0) -> (0,1)
        fracture=((1.0, 0.0), (0.0, 1.0)),
        has_exact=False,
        neumann_subdomain=1,
        meta={"variant": variant},
    )


CASES: dict[str, Callable[[], CaseDefinition]] = {
    "ex1-iso": lambda: case_ex1("isotropic"),
    "ex1-aniso": lambda: case_ex1("anisotropic"),
    "ex3": case_ex3,
    "fivespot-permeable": lambda: case_fivespot("permeable"),
    "fivespot-impermeable": lambda: case_fivespot("impermeable"),
}


def get_case(name: str) -> CaseDefinition:
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None
