"""Shape diagnostics for polygonal cells and their sub-triangles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.optimize import linprog

from .polygonal import polygon_diameter

if TYPE_CHECKING:
    from .staggered import StaggeredMesh


def kernel_chebyshev(xy: np.ndarray) -> tuple[np.ndarray, float]:
    """Centre and radius of the largest disc inside the kernel of a polygon.

    The kernel of a simple polygon is the intersection of the inner
    half-planes of its edges, so the disc is found by a small LP. A
    non-positive radius means the polygon is not star-shaped.
    """
    d = np.roll(xy, -1, axis=0) - xy
    length = np.hypot(d[:, 0], d[:, 1])
    keep = length > 0.0
    d, p, length = d[keep], xy[keep], length[keep]
    # outward normals of a counter-clockwise loop
    nrm = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    rhs = np.einsum("ij,ij->i", nrm, p)
    A = np.column_stack([nrm, np.ones(len(nrm))])
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=A,
        b_ub=rhs,
        bounds=[(None, None), (None, None), (None, None)],
        method="highs",
    )
    if not res.success:
        return xy.mean(axis=0), 0.0
    return res.x[:2], float(res.x[2])


@dataclass(frozen=True)
class MeshQuality:
    """Per-cell rho_S and rho_E, per-triangle maximum angle (radians)."""

    rho_S: np.ndarray
    rho_E: np.ndarray
    max_angle: np.ndarray

    def summary(self) -> dict[str, float]:
        return {
            "min_rho_S": float(self.rho_S.min()),
            "min_rho_E": float(self.rho_E.min()),
            "max_angle_deg": float(np.degrees(self.max_angle.max())),
        }


def triangle_max_angles(p: np.ndarray) -> np.ndarray:
    """Largest interior angle of each triangle in a (n, 3, 2) array."""
    out = np.zeros(len(p))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        out = np.maximum(out, np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


def cell_rho(xy: np.ndarray) -> tuple[float, float]:
    diam = polygon_diameter(xy)
    _, r = kernel_chebyshev(xy)
    e = np.roll(xy, -1, axis=0) - xy
    hmin = float(np.hypot(e[:, 0], e[:, 1]).min())
    return r / diam, hmin / diam


def quality(sm: "StaggeredMesh") -> MeshQuality:
    mesh = sm.mesh
    rs, re = zip(*(cell_rho(mesh.cell_xy(c)) for c in range(mesh.n_cells)))
    return MeshQuality(
        rho_S=np.array(rs),
        rho_E=np.array(re),
        max_angle=triangle_max_angles(sm.points[sm.triangles]),
    )
