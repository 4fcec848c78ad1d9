"""Polygonal primal meshes aligned with a single polyline fracture."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised when a mesh violates a structural invariant."""


class AlignmentError(MeshError):
    """Raised when the fracture cannot be represented by mesh edges."""


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def polygon_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def polygon_diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


@dataclass(eq=False)
class PolygonalMesh:
    """Primal polygonal mesh of the bulk domain.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : list of int arrays, counter-clockwise vertex loops
    fracture : int array, vertex chain along the fracture. The chain is
        oriented so that subdomain 1 lies on its left; the fracture normal
        therefore points from subdomain 1 into subdomain 2.
    neumann : set of boundary edge keys carrying a flux condition; all other
        boundary edges are Dirichlet.
    subdomain : int array (1 or 2) per cell
    """

    vertices: np.ndarray
    cells: list[np.ndarray]
    fracture: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    neumann: frozenset[tuple[int, int]] = frozenset()
    subdomain: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = [np.asarray(c, dtype=int) for c in self.cells]
        self.fracture = np.asarray(self.fracture, dtype=int)
        self.neumann = frozenset(edge_key(*e) for e in self.neumann)
        if self.subdomain is None:
            self.subdomain = infer_subdomains(self.cells, self.fracture)
        else:
            self.subdomain = np.asarray(self.subdomain, dtype=int)
        self.vertices.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def cell_xy(self, c: int) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def cell_areas(self) -> np.ndarray:
        return np.array([polygon_area(self.cell_xy(c)) for c in range(self.n_cells)])

    def fracture_edges(self) -> list[tuple[int, int]]:
        f = self.fracture
        return [(int(f[i]), int(f[i + 1])) for i in range(len(f) - 1)]

    def edge_cells(self) -> dict[tuple[int, int], list[int]]:
        """Map each undirected edge to the cells that contain it."""
        out: dict[tuple[int, int], list[int]] = {}
        for c, loop in enumerate(self.cells):
            for a, b in zip(loop, np.roll(loop, -1)):
                out.setdefault(edge_key(int(a), int(b)), []).append(c)
        return out

    def boundary_edges(self) -> list[tuple[int, int]]:
        return sorted(e for e, cs in self.edge_cells().items() if len(cs) == 1)

    def boundary_tags(self) -> dict[tuple[int, int], str]:
        return {
            e: ("neumann" if e in self.neumann else "dirichlet")
            for e in self.boundary_edges()
        }

    def validate(self) -> None:
        """Check the structural invariants; raise MeshError on violation."""
        scale = self.diameter()
        for c in range(self.n_cells):
            loop = self.cells[c]
            if len(loop) < 3:
                raise MeshError(f"cell {c} has fewer than three vertices")
            if len(set(loop.tolist())) != len(loop):
                raise MeshError(f"cell {c} repeats a vertex")
            if polygon_area(self.cell_xy(c)) <= 1e-14 * scale**2:
                raise MeshError(f"cell {c} is not counter-clockwise with positive area")
        directed: set[tuple[int, int]] = set()
        for c, loop in enumerate(self.cells):
            for a, b in zip(loop, np.roll(loop, -1)):
                if (int(a), int(b)) in directed:
                    raise MeshError(f"directed edge {(int(a), int(b))} used twice (cell {c})")
                directed.add((int(a), int(b)))
        ec = self.edge_cells()
        for e, cs in ec.items():
            if len(cs) > 2:
                raise MeshError(f"edge {e} shared by more than two cells")
        fset = {edge_key(*e) for e in self.fracture_edges()}
        for e in fset:
            cs = ec.get(e)
            if cs is None:
                raise AlignmentError(f"fracture segment {e} is not a mesh edge")
            if len(cs) == 2 and self.subdomain[cs[0]] == self.subdomain[cs[1]]:
                raise AlignmentError(f"fracture edge {e} does not separate the subdomains")
        for e, cs in ec.items():
            if len(cs) == 2 and e not in fset and self.subdomain[cs[0]] != self.subdomain[cs[1]]:
                raise AlignmentError(f"cells {cs} in different subdomains share a non-fracture edge")
        for e in self.neumann:
            if e not in ec or len(ec[e]) != 1:
                raise MeshError(f"Neumann tag on non-boundary edge {e}")

    def diameter(self) -> float:
        lo, hi = self.vertices.min(0), self.vertices.max(0)
        return float(np.hypot(*(hi - lo)))

    def bulk_area(self) -> float:
        return float(self.cell_areas().sum())

    def canonical(self, decimals: int = 9) -> tuple:
        """Index-free description used to compare meshes up to relabelling."""
        def pt(i: int) -> tuple[float, float]:
            x, y = np.round(self.vertices[i], decimals) + 0.0
            return (float(x), float(y))

        cells = []
        for c, loop in enumerate(self.cells):
            pts = [pt(i) for i in loop]
            j = pts.index(min(pts))
            cells.append((tuple(pts[j:] + pts[:j]), int(self.subdomain[c])))
        frac = tuple(sorted(tuple(sorted((pt(a), pt(b)))) for a, b in self.fracture_edges()))
        neu = tuple(sorted(tuple(sorted((pt(a), pt(b)))) for a, b in self.neumann))
        return (tuple(sorted(cells)), frac, neu)

    # ---- JSON interchange -------------------------------------------------

    def to_json(self) -> dict:
        tags = self.boundary_tags()
        return {
            "vertices": self.vertices.tolist(),
            "cells": [loop.tolist() for loop in self.cells],
            "fracture": self.fracture.tolist(),
            "boundary": {
                "dirichlet": [list(e) for e, t in sorted(tags.items()) if t == "dirichlet"],
                "neumann": [list(e) for e, t in sorted(tags.items()) if t == "neumann"],
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolygonalMesh":
        neumann = frozenset(edge_key(int(a), int(b)) for a, b in data.get("boundary", {}).get("neumann", []))
        mesh = cls(
            vertices=np.array(data["vertices"], dtype=float).reshape(-1, 2),
            cells=[np.array(c, dtype=int) for c in data["cells"]],
            fracture=np.array(data.get("fracture", []), dtype=int),
            neumann=neumann,
            subdomain=data.get("subdomain"),
        )
        mesh.validate()
        return mesh

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "PolygonalMesh":
        return cls.from_json(json.loads(Path(path).read_text()))


def infer_subdomains(cells: list[np.ndarray], fracture: np.ndarray) -> np.ndarray:
    """Label cells 1/2 by flood fill across non-fracture edges.

    A cell whose loop traverses a fracture edge in the chain direction lies
    to the left of the chain and belongs to subdomain 1.
    """
    n = len(cells)
    sub = np.zeros(n, dtype=int)
    fracture = np.asarray(fracture, dtype=int)
    if len(fracture) < 2:
        sub[:] = 1
        return sub
    fdir = {(int(fracture[i]), int(fracture[i + 1])) for i in range(len(fracture) - 1)}
    fkeys = {edge_key(a, b) for a, b in fdir}
    neighbours: list[list[int]] = [[] for _ in range(n)]
    by_edge: dict[tuple[int, int], list[int]] = {}
    for c, loop in enumerate(cells):
        for a, b in zip(loop, np.roll(loop, -1)):
            a, b = int(a), int(b)
            if (a, b) in fdir:
                sub[c] = 1
            elif (b, a) in fdir:
                sub[c] = 2
            key = edge_key(a, b)
            if key not in fkeys:
                by_edge.setdefault(key, []).append(c)
    for cs in by_edge.values():
        if len(cs) == 2:
            neighbours[cs[0]].append(cs[1])
            neighbours[cs[1]].append(cs[0])
    stack = [c for c in range(n) if sub[c]]
    while stack:
        c = stack.pop()
        for d in neighbours[c]:
            if sub[d] == 0:
                sub[d] = sub[c]
                stack.append(d)
    sub[sub == 0] = 1
    return sub


def merge_close_vertices(
    vertices: np.ndarray, cells: list[np.ndarray], tol: float
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Merge vertices closer than ``tol`` and drop repeated loop entries."""
    from scipy.spatial import cKDTree

    tree = cKDTree(vertices)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(vertices))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(vertices))])
    used = np.unique(np.concatenate([roots[c] for c in cells])) if cells else np.zeros(0, int)
    renumber = -np.ones(len(vertices), dtype=int)
    renumber[used] = np.arange(len(used))
    new_cells = []
    for c in cells:
        loop = renumber[roots[c]]
        keep = loop != np.roll(loop, 1)
        loop = loop[keep]
        if len(loop) >= 3:
            new_cells.append(loop)
    return vertices[used].copy(), new_cells
