"""Gauss quadrature on the reference triangle and on [0, 1].

Triangle rules are collapsed (Duffy) products of Gauss-Jacobi and
Gauss-Legendre rules, so any exactness degree is available with positive
weights. The reference triangle has vertices (0, 0), (1, 0), (0, 1).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights of a rule together with its exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle, exact for polynomials of ``degree``."""
    n = max(1, (degree + 2) // 2)
    # collapsed coordinate carries the (1 - s) Jacobian factor
    s, ws = roots_jacobi(n, 1.0, 0.0)
    t, wt = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    ws = ws / 4.0
    t = 0.5 * (t + 1.0)
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = ((1.0 - S) * T).ravel()
    w = np.outer(ws, wt).ravel()
    pts = np.column_stack([x, y])
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def symmetric_triangle_rule(degree: int) -> QuadratureRule:
    """``triangle_rule`` averaged over the six vertex permutations.

    The result is invariant under relabelling of the triangle vertices,
    so mirrored meshes see mirrored quadrature points.
    """
    base = triangle_rule(degree)
    lam = np.column_stack([1.0 - base.points.sum(axis=1), base.points])
    pts = np.vstack([lam[:, [i, j]] for i, j in itertools.permutations(range(3), 2)])
    w = np.tile(base.weights, 6) / 6.0
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def line_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact for polynomials of ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (t + 1.0)
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(pts, w, degree)


def legendre01(n: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal shifted Legendre polynomials on [0, 1].

    Returns an array of shape ``s.shape + (n,)`` whose columns satisfy
    ``int_0^1 L_i L_j ds = delta_ij``.
    """
    s = np.asarray(s, dtype=float)
    x = 2.0 * s - 1.0
    out = np.empty(s.shape + (n,))
    if n == 0:
        return out
    p_prev = np.ones_like(x)
    out[..., 0] = p_prev
    if n > 1:
        p = x.copy()
        out[..., 1] = p
        for j in range(1, n - 1):
            p_next = ((2 * j + 1) * x * p - j * p_prev) / (j + 1)
            p_prev, p = p, p_next
            out[..., j + 1] = p
    out *= np.sqrt(2.0 * np.arange(n) + 1.0)
    return out


def gauss_lobatto_nodes(k: int) -> np.ndarray:
    """The k + 1 Gauss-Lobatto-Legendre nodes on [0, 1]."""
    if k < 1:
        raise ValueError("Gauss-Lobatto nodes need k >= 1")
    if k == 1:
        return np.array([0.0, 1.0])
    # interior nodes are the roots of P'_k
    dP = np.polynomial.legendre.Legendre.basis(k).deriv()
    inner = np.sort(dP.roots().real)
    return 0.5 * (np.concatenate([[-1.0], inner, [1.0]]) + 1.0)


def lagrange_basis(nodes: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange basis values and derivatives at ``s`` for the given nodes.

    Both arrays have shape ``(len(s), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    m = len(nodes)
    val = np.ones((len(s), m))
    der = np.zeros((len(s), m))
    for i in range(m):
        others = [j for j in range(m) if j != i]
        denom = np.prod([nodes[i] - nodes[j] for j in others])
        for j in others:
            val[:, i] *= s - nodes[j]
        for j in others:
            term = np.ones_like(s)
            for l in others:
                if l != j:
                    term = term * (s - nodes[l])
            der[:, i] += term
        val[:, i] /= denom
        der[:, i] /= denom
    return val, der


def monomial_integral_triangle(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def quadrature_check(degree: int) -> dict[str, float]:
    """Integrate all monomials up to ``degree`` and report the worst error.

    The triangle rule is compared with the closed-form Beta integral and
    the line rule with 1 / (a + 1).
    """
    tri = triangle_rule(degree)
    lin = line_rule(degree)
    worst_tri = 0.0
    worst_line = 0.0
    x, y = tri.points[:, 0], tri.points[:, 1]
    for total in range(degree + 1):
        for a in range(total + 1):
            b = total - a
            approx = np.dot(tri.weights, x**a * y**b)
            worst_tri = max(worst_tri, abs(approx - monomial_integral_triangle(a, b)))
        approx = np.dot(lin.weights, lin.points**total)
        worst_line = max(worst_line, abs(approx - 1.0 / (total + 1)))
    if min(tri.weights.min(), lin.weights.min()) <= 0.0:
        raise ArithmeticError("quadrature rule has non-positive weights")
    return {
        "degree": degree,
        "triangle_points": tri.size,
        "line_points": lin.size,
        "triangle_max_error": worst_tri,
        "line_max_error": worst_line,
        "triangle_weight_sum": float(tri.weights.sum()),
        "line_weight_sum": float(lin.weights.sum()),
    }


def dim_pk(k: int) -> int:
    """Dimension of the bivariate polynomial space of degree <= k."""
    return comb(k + 2, 2) if k >= 0 else 0
