"""Mesh generators and transformations on the unit square."""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import QhullError, Voronoi

from .polygonal import (
    AlignmentError,
    MeshError,
    PolygonalMesh,
    edge_key,
    merge_close_vertices,
    polygon_area,
    polygon_centroid,
)

log = logging.getLogger(__name__)

GEOM_TOL = 1e-10


def _vertical_chain(vertices: np.ndarray, x: float, tol: float) -> np.ndarray:
    on = np.flatnonzero(np.abs(vertices[:, 0] - x) < tol)
    return on[np.argsort(vertices[on, 1])]


def generate_uniform(kind: str, n: int, fracture_x: float | None = 0.5) -> PolygonalMesh:
    """Uniform triangular or rectangular mesh of the unit square.

    The fracture is the vertical segment x = fracture_x, which has to be an
    interior grid line. ``fracture_x=None`` gives a mesh without fracture.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind not in ("triangular", "rectangular", "tri", "rect"):
        raise ValueError(f"unknown uniform mesh kind {kind!r}")
    if fracture_x is not None:
        i_f = fracture_x * n
        if abs(i_f - round(i_f)) > 1e-12 or not (0 < round(i_f) < n):
            raise AlignmentError(
                f"fracture x={fracture_x} is not an interior grid line of the {n}x{n} grid"
            )
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i: int, j: int) -> int:
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if kind in ("rectangular", "rect"):
                cells.append(np.array([v00, v10, v11, v01]))
            else:
                cells.append(np.array([v00, v10, v11]))
                cells.append(np.array([v00, v11, v01]))
    fracture = np.zeros(0, dtype=int)
    if fracture_x is not None:
        fracture = _vertical_chain(vertices, float(g[int(round(fracture_x * n))]), 1e-12)
    mesh = PolygonalMesh(vertices, cells, fracture)
    mesh.validate()
    return mesh


# ---- centroidal Voronoi tessellations ----------------------------------------


def _bounded_voronoi(points: np.ndarray, band: float | None = None) -> tuple[np.ndarray, list[np.ndarray]]:
    """Voronoi cells of ``points`` restricted to the unit square.

    Generators are reflected across the four sides; the bisector between a
    generator and its reflection is the side itself, so the cells of the
    original generators are exactly the bounded diagram. Only generators
    within ``band`` of a side are reflected; if a cell then leaves the
    square the full reflection is used instead.
    """
    n = len(points)
    if band is None:
        band = 4.0 / np.sqrt(n)
    x, y = points[:, 0], points[:, 1]
    parts = [points]
    for sel, img in (
        (x < band, np.column_stack([-x, y])),
        (x > 1.0 - band, np.column_stack([2.0 - x, y])),
        (y < band, np.column_stack([x, -y])),
        (y > 1.0 - band, np.column_stack([x, 2.0 - y])),
    ):
        parts.append(img[sel])
    vor = Voronoi(np.vstack(parts))
    regions, point_region = vor.regions, vor.point_region
    cells = []
    for i in range(n):
        region = regions[point_region[i]]
        if -1 in region or len(region) < 3:
            if band < 2.0:
                return _bounded_voronoi(points, band=2.0)
            raise MeshError("unbounded Voronoi region for an interior generator")
        idx = np.array(region, dtype=int)
        rel = vor.vertices[idx] - points[i]
        idx = idx[np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))]
        cells.append(idx)
    if band < 2.0:
        used = vor.vertices[np.unique(np.concatenate(cells))]
        if used.min() < -1e-12 or used.max() > 1.0 + 1e-12:
            return _bounded_voronoi(points, band=2.0)
    return vor.vertices, cells


def _centroids(vertices: np.ndarray, cells: list[np.ndarray]) -> np.ndarray:
    lengths = np.array([len(c) for c in cells])
    start = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    flat = np.concatenate(cells)
    nxt = np.arange(len(flat)) + 1
    ends = start + lengths
    nxt[ends - 1] = start
    p, q = vertices[flat], vertices[flat[nxt]]
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    area = 0.5 * np.add.reduceat(cross, start)
    cx = np.add.reduceat((p[:, 0] + q[:, 0]) * cross, start) / (6.0 * area)
    cy = np.add.reduceat((p[:, 1] + q[:, 1]) * cross, start) / (6.0 * area)
    return np.column_stack([cx, cy])


def _fixed_generators(n_seeds: int, fracture_x: float) -> tuple[np.ndarray, float]:
    spacing = 1.0 / np.sqrt(n_seeds)
    m = max(1, int(round(1.0 / spacing)))
    delta = min(0.5 * spacing, fracture_x, 1.0 - fracture_x)
    ys = (np.arange(m) + 0.5) / m
    fixed = np.vstack(
        [np.column_stack([np.full(m, fracture_x - delta), ys]),
         np.column_stack([np.full(m, fracture_x + delta), ys])]
    )
    # free generators outside this band can never be nearest to a fracture point
    band = 1.05 * np.hypot(delta, 0.5 / m)
    return fixed, band


def _push_out_of_band(pts: np.ndarray, fracture_x: float, band: float) -> np.ndarray:
    d = pts[:, 0] - fracture_x
    inside = np.abs(d) < band
    side = np.where(d >= 0.0, 1.0, -1.0)
    pts = pts.copy()
    pts[inside, 0] = np.clip(fracture_x + side[inside] * band, 1e-6, 1.0 - 1e-6)
    return pts


def generate_voronoi(
    n_seeds: int,
    fracture_x: float | None = 0.5,
    lloyd_iters: int = 100,
    rng_seed: int = 0,
    max_retries: int = 5,
) -> PolygonalMesh:
    """Lloyd-relaxed bounded Voronoi mesh of the unit square.

    With a fracture, mirrored generator pairs straddling x = fracture_x are
    frozen and the free generators are kept out of a band around the
    fracture, so the fracture is a union of Voronoi edges.
    """
    if n_seeds < 4:
        raise ValueError("n_seeds must be >= 4")
    if lloyd_iters < 0:
        raise ValueError("lloyd_iters must be >= 0")
    rng = np.random.default_rng(rng_seed)
    if fracture_x is not None:
        if not 0.0 < fracture_x < 1.0:
            raise AlignmentError("fracture must lie strictly inside the unit square")
        fixed, band = _fixed_generators(n_seeds, fracture_x)
    else:
        fixed, band = np.zeros((0, 2)), 0.0
    n_free = n_seeds - len(fixed)
    if n_free < 0:
        raise ValueError("too few seeds for the fracture generators")
    free = rng.uniform(0.0, 1.0, size=(n_free, 2))
    if fracture_x is not None:
        free = _push_out_of_band(free, fracture_x, band)

    for attempt in range(max_retries + 1):
        try:
            pts = np.vstack([fixed, free])
            for _ in range(lloyd_iters):
                verts, cells = _bounded_voronoi(pts)
                cen = _centroids(verts, cells)
                free = cen[len(fixed):]
                if fracture_x is not None:
                    free = _push_out_of_band(free, fracture_x, band)
                pts = np.vstack([fixed, free])
            verts, cells = _bounded_voronoi(pts)
            break
        except (QhullError, MeshError) as exc:
            if attempt == max_retries:
                raise MeshError(f"Voronoi generation failed after {max_retries} retries") from exc
            log.warning("degenerate Voronoi diagram (%s); regenerating with jitter", exc)
            free = np.clip(free + rng.normal(scale=1e-3, size=free.shape), 1e-6, 1 - 1e-6)

    verts = verts.copy()
    tol = GEOM_TOL * np.sqrt(2.0)
    for val in (0.0, 1.0):
        verts[np.abs(verts - val) < 1e-9] = val
    if fracture_x is not None:
        verts[np.abs(verts[:, 0] - fracture_x) < 1e-9, 0] = fracture_x
    verts, cells = merge_close_vertices(verts, cells, tol)
    fracture = np.zeros(0, dtype=int)
    if fracture_x is not None:
        fracture = _vertical_chain(verts, fracture_x, 1e-12)
    mesh = PolygonalMesh(verts, cells, fracture)
    mesh.validate()
    return mesh


# ---- transformations ---------------------------------------------------------


def _replace_vertex(loop: np.ndarray, v: int, repl: list[int]) -> np.ndarray:
    out: list[int] = []
    for w in loop:
        out.extend(repl if w == v else [int(w)])
    return np.array(out, dtype=int)


def perturb_small_edges(mesh: PolygonalMesh, d_ratio: float) -> PolygonalMesh:
    """Replace the centre vertex of every 2x2 block by a short diagonal edge.

    The new edge joins v - (d/2)(1, 1) and v + (d/2)(1, 1), d = d_ratio * h_e,
    so it has length sqrt(2) d. Each block turns into two quadrilaterals and
    two pentagons. Block centres lying on the fracture are left untouched so
    that the mesh stays fracture-aligned.
    """
    if not 0.0 <= d_ratio < 0.5:
        raise ValueError("d_ratio must lie in [0, 0.5)")
    if any(len(c) != 4 for c in mesh.cells):
        raise MeshError("perturbation expects a uniform rectangular mesh")
    n = int(round(np.sqrt(mesh.n_cells)))
    if n * n != mesh.n_cells or len(mesh.vertices) != (n + 1) ** 2:
        raise MeshError("perturbation expects a uniform rectangular mesh")
    if n % 2:
        raise MeshError("perturbation needs an even number of subdivisions")
    if d_ratio == 0.0:
        return mesh
    h = 1.0 / n
    d = d_ratio * h
    verts = [tuple(v) for v in mesh.vertices]
    cells = [c.copy() for c in mesh.cells]
    vertex_cells: dict[int, list[int]] = {}
    for c, loop in enumerate(cells):
        for w in loop:
            vertex_cells.setdefault(int(w), []).append(c)
    on_fracture = set(mesh.fracture.tolist())
    lookup = {tuple(np.round(mesh.vertices[i] * n).astype(int)): i for i in range(mesh.n_vertices)}
    for bj in range(n // 2):
        for bi in range(n // 2):
            v = lookup[(2 * bi + 1, 2 * bj + 1)]
            if v in on_fracture:
                continue
            vx, vy = mesh.vertices[v]
            a = len(verts)
            verts.append((vx - 0.5 * d, vy - 0.5 * d))
            b = len(verts)
            verts.append((vx + 0.5 * d, vy + 0.5 * d))
            for c in vertex_cells[v]:
                cx, cy = polygon_centroid(mesh.cell_xy(c))
                if cx < vx and cy < vy:
                    cells[c] = _replace_vertex(cells[c], v, [a])
                elif cx > vx and cy > vy:
                    cells[c] = _replace_vertex(cells[c], v, [b])
                elif cx < vx:
                    cells[c] = _replace_vertex(cells[c], v, [a, b])
                else:
                    cells[c] = _replace_vertex(cells[c], v, [b, a])
    # drop the replaced centre vertices and renumber
    used = np.unique(np.concatenate(cells))
    renum = -np.ones(len(verts), dtype=int)
    renum[used] = np.arange(len(used))
    vertices = np.array(verts)[used]
    out = PolygonalMesh(
        vertices,
        [renum[c] for c in cells],
        renum[mesh.fracture],
        frozenset(edge_key(renum[a], renum[b]) for a, b in mesh.neumann),
    )
    out.validate()
    return out


def map_anisotropic(mesh: PolygonalMesh) -> PolygonalMesh:
    """Apply (x, y) -> (x, sin(pi y / 2)) to every vertex."""
    v = mesh.vertices.copy()
    v[:, 1] = np.sin(0.5 * np.pi * v[:, 1])
    out = PolygonalMesh(v, mesh.cells, mesh.fracture, mesh.neumann, mesh.subdomain)
    out.validate()
    return out


def split_unfitted(
    mesh: PolygonalMesh, start: tuple[float, float], end: tuple[float, float]
) -> PolygonalMesh:
    """Split convex cells cut by the straight fracture through ``start`` -> ``end``.

    Subdomain 1 lies to the left of the directed line. Intersection points are
    shared between neighbouring cells; vertices within the geometric tolerance
    of the line are projected onto it. Slivers and small edges are kept.
    """
    p0 = np.asarray(start, dtype=float)
    t = np.asarray(end, dtype=float) - p0
    t /= np.linalg.norm(t)
    normal = np.array([t[1], -t[0]])
    tol = GEOM_TOL * mesh.diameter()

    verts = mesh.vertices.copy()
    s = (verts - p0) @ normal
    on = np.abs(s) < tol
    verts[on] -= np.outer(s[on], normal)
    s[on] = 0.0
    sign = np.sign(s).astype(int)
    new_pts: list[np.ndarray] = []
    cut_vertex: dict[tuple[int, int], int] = {}

    def cut(a: int, b: int) -> int:
        key = edge_key(a, b)
        if key not in cut_vertex:
            i, j = key
            lam = s[i] / (s[i] - s[j])
            pt = verts[i] + lam * (verts[j] - verts[i])
            pt = pt - ((pt - p0) @ normal) * normal
            cut_vertex[key] = len(verts) + len(new_pts)
            new_pts.append(pt)
        return cut_vertex[key]

    cells: list[np.ndarray] = []
    sub: list[int] = []
    for c, loop in enumerate(mesh.cells):
        sg = sign[loop]
        if np.all(sg >= 0) or np.all(sg <= 0):
            cells.append(loop.copy())
            sub.append(2 if np.any(sg > 0) else 1)
            continue
        neg: list[int] = []
        pos: list[int] = []
        for a, b in zip(loop, np.roll(loop, -1)):
            a, b = int(a), int(b)
            if sign[a] <= 0:
                neg.append(a)
            if sign[a] >= 0:
                pos.append(a)
            if sign[a] * sign[b] < 0:
                m = cut(a, b)
                neg.append(m)
                pos.append(m)
        for part, label in ((neg, 1), (pos, 2)):
            if len(part) >= 3:
                cells.append(np.array(part, dtype=int))
                sub.append(label)
    all_verts = np.vstack([verts] + new_pts) if new_pts else verts
    total = sum(polygon_area(all_verts[c]) for c in cells)
    if abs(total - mesh.bulk_area()) > 1e-9 * mesh.bulk_area():
        raise MeshError("splitting lost area; cells cut by the fracture must be convex")

    # neumann tags carry over to both halves of a cut boundary edge
    neumann = set()
    for a, b in mesh.neumann:
        if (a, b) in cut_vertex:
            m = cut_vertex[(a, b)]
            neumann.update({edge_key(a, m), edge_key(m, b)})
        else:
            neumann.add((a, b))

    s_all = np.concatenate([s, np.zeros(len(new_pts))])
    used = np.unique(np.concatenate(cells))
    online = used[np.abs(s_all[used]) == 0.0]
    online = online[np.argsort((all_verts[online] - p0) @ t)]
    out = PolygonalMesh(all_verts, cells, online, frozenset(neumann), np.array(sub))
    # drop chain vertices that are not connected by mesh edges (line grazing
    # the domain at a single point)
    edges = out.edge_cells()
    chain = [int(v) for v in online]
    keep = [
        i for i in range(len(chain) - 1)
        if len(edges.get(edge_key(chain[i], chain[i + 1]), [])) == 2
    ]
    if len(keep) != len(chain) - 1:
        raise AlignmentError("fracture line does not run along mesh edges after splitting")
    out.validate()
    return out


def tag_neumann(mesh: PolygonalMesh, subdomain: int) -> PolygonalMesh:
    """Tag the boundary edges of cells in ``subdomain`` as Neumann."""
    ec = mesh.edge_cells()
    neumann = frozenset(
        e for e, cs in ec.items() if len(cs) == 1 and mesh.subdomain[cs[0]] == subdomain
    )
    return PolygonalMesh(mesh.vertices, mesh.cells, mesh.fracture, neumann, mesh.subdomain)
