"""Refinement studies: mesh sequences, solves, error tables and plot data."""

from __future__ import annotations

import csv
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .analysis import compute_errors, pair_rate
from .assembly import apply_boundary, assemble
from .cases import CaseDefinition, get_case
from .mesh import (
    PolygonalMesh,
    build_staggered,
    generate_uniform,
    generate_voronoi,
    map_anisotropic,
    perturb_small_edges,
    split_unfitted,
    tag_neumann,
)
from .spaces import build_layout
from .system import Solution, solve

log = logging.getLogger(__name__)

MESH_KINDS = ("tri", "rect", "cvt", "perturbed", "mapped-rect", "mapped-cvt", "unfitted")
CSV_COLUMNS = (
    "case", "mesh_kind", "k", "level", "h", "ndof_u", "ndof_p", "ndof_pG",
    "err_u", "err_p", "err_pG", "super_p", "super_pG", "rate_u", "rate_p", "rate_pG",
)


@dataclass
class StudyConfig:
    """One study: a case, a mesh family, degrees and refinement levels.

    Level ``l`` uses n = n0 * 2**l subdivisions per axis (nominal h = 1/n);
    Voronoi meshes use 4 n^2 generators so that h ~ n_seeds^{-1/2}.
    """

    case: str
    mesh: str
    k: list[int] = field(default_factory=lambda: [1])
    levels: int = 4
    out: str = "results"
    n0: int = 4
    d_ratio: float = 0.001
    seed: int = 0
    lloyd_iters: int = 100
    method: str = "condensed"
    samples: int = 41

    def __post_init__(self) -> None:
        if self.mesh not in MESH_KINDS:
            raise ValueError(f"unknown mesh kind {self.mesh!r}; choose from {MESH_KINDS}")
        self.k = [int(k) for k in (self.k if isinstance(self.k, (list, tuple)) else [self.k])]
        if self.levels < 1 or self.n0 < 1:
            raise ValueError("levels and n0 must be positive")

    @classmethod
    def from_mapping(cls, data: dict) -> "StudyConfig":
        clean = {k.replace("-", "_"): v for k, v in data.items()}
        if isinstance(clean.get("k"), str):
            clean["k"] = [int(s) for s in clean["k"].split(",")]
        known = set(cls.__dataclass_fields__)
        unknown = set(clean) - known
        if unknown:
            raise ValueError(f"unknown configuration keys {sorted(unknown)}")
        if "case" in clean:
            get_case(clean["case"])
        return cls(**clean)


def build_mesh(kind: str, n: int, case: CaseDefinition, cfg: StudyConfig | None = None) -> PolygonalMesh:
    """Fracture-aligned mesh of the given family for ``case`` with n subdivisions.

    Meshes are cached on their defining parameters, so studies sharing a
    mesh family (several degrees or cases) generate each Voronoi mesh once.
    """
    cfg = cfg or StudyConfig(case=case.name, mesh=kind)
    return _cached_mesh(kind, n, case.fracture, case.neumann_subdomain, cfg.d_ratio, cfg.seed, cfg.lloyd_iters)


@lru_cache(maxsize=16)
def _cached_mesh(kind, n, fracture, neumann_subdomain, d_ratio, seed, lloyd_iters) -> PolygonalMesh:
    (x0, _), (x1, _) = fracture
    fx = x0 if x0 == x1 else None
    seeds = 4 * n * n

    def split(m: PolygonalMesh) -> PolygonalMesh:
        return split_unfitted(m, fracture[0], fracture[1])

    if kind in ("tri", "rect"):
        mesh = generate_uniform(kind, n, fx) if fx is not None else split(generate_uniform(kind, n, None))
    elif kind == "cvt":
        if fx is None:
            mesh = split(generate_voronoi(seeds, None, lloyd_iters, seed))
        else:
            mesh = generate_voronoi(seeds, fx, lloyd_iters, seed)
    elif kind == "perturbed":
        mesh = perturb_small_edges(generate_uniform("rect", n, fx), d_ratio)
    elif kind == "mapped-rect":
        mesh = map_anisotropic(generate_uniform("rect", n, fx))
    elif kind == "mapped-cvt":
        mesh = map_anisotropic(generate_voronoi(seeds, fx, lloyd_iters, seed))
    elif kind == "unfitted":
        mesh = split(generate_voronoi(seeds, None, lloyd_iters, seed))
    else:
        raise ValueError(f"unknown mesh kind {kind!r}")
    if neumann_subdomain is not None:
        mesh = tag_neumann(mesh, neumann_subdomain)
    return mesh


def solve_case(case: CaseDefinition, mesh: PolygonalMesh, k: int, method: str = "condensed", h: float | None = None):
    """Build, assemble, solve and (when possible) measure errors."""
    sm = build_staggered(mesh)
    layout = build_layout(sm, k)
    coeffs = case.coefficients(sm)
    data = case.data()
    blocks = apply_boundary(assemble(sm, layout, coeffs, data), layout, data)
    sol = solve(blocks, layout, method=method)
    report = compute_errors(sol, case, coeffs, h=h)
    return sol, coeffs, blocks, report


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _series(cfg: StudyConfig, k: int) -> tuple[list[dict], list[dict], str | None]:
    """Rows, plot-data rows and a failure reason for one (mesh, k) series."""
    case = get_case(cfg.case)
    rows: list[dict] = []
    reports = []
    out = Path(cfg.out)
    try:
        for level in range(cfg.levels):
            n = cfg.n0 * 2**level
            h = 1.0 / n
            mesh = build_mesh(cfg.mesh, n, case, cfg)
            sol, _, _, rep = solve_case(case, mesh, k, cfg.method, h=h)
            lay = sol.p.layout
            row = {
                "case": cfg.case, "mesh_kind": cfg.mesh, "k": k, "level": level, "h": h,
                "ndof_u": lay.n_flux, "ndof_p": lay.n_pressure, "ndof_pG": lay.n_fracture,
            }
            if rep.available:
                row.update(err_u=rep.err_u, err_p=rep.err_p, err_pG=rep.err_pG,
                           super_p=rep.super_p, super_pG=rep.super_pG)
                if reports:
                    prev = reports[-1]
                    row.update(
                        rate_u=pair_rate(prev.err_u, rep.err_u, prev.h, rep.h),
                        rate_p=pair_rate(prev.err_p, rep.err_p, prev.h, rep.h),
                        rate_pG=pair_rate(prev.err_pG, rep.err_pG, prev.h, rep.h),
                    )
                reports.append(rep)
            rows.append(row)
            if level == cfg.levels - 1:
                write_samples(sol, case, out / f"{cfg.case}_{cfg.mesh}_k{k}_field.dat", cfg.samples)
    except Exception as exc:  # recorded per series; the study continues
        log.error("series %s/%s k=%d failed: %s", cfg.case, cfg.mesh, k, exc)
        return rows, [], f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"
    return rows, rows, None


def write_samples(sol: Solution, case: CaseDefinition, path: Path, n: int) -> None:
    """Point samples of the bulk pressure on a grid and along the diagonal."""
    path.parent.mkdir(parents=True, exist_ok=True)
    g = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(g, g)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = sol.p.sample(pts)
    with open(path, "w") as fh:
        fh.write("# x y p\n")
        for (x, y), v in zip(pts, vals):
            fh.write(f"{float(x)!r} {float(y)!r} {float(v)!r}\n")
    s = np.linspace(0.0, 1.0, 4 * n + 1)
    diag = np.column_stack([s, s])
    with open(path.with_name(path.stem + "_diagonal.dat"), "w") as fh:
        fh.write("# s p_side1 p_side2\n")
        p1 = sol.p.sample(diag, prefer_subdomain=1)
        p2 = sol.p.sample(diag, prefer_subdomain=2)
        for t, a, b in zip(s, p1, p2):
            fh.write(f"{float(t)!r} {float(a)!r} {float(b)!r}\n")


def run_study(cfg: StudyConfig, threads: int | None = None) -> tuple[Path, dict[int, str]]:
    """Run every (k, level) of ``cfg``; write the CSV and plot data.

    Returns the CSV path and the failure reasons keyed by degree.
    ``threads`` (default: FRACDG_THREADS or 1) caps the number of worker
    processes; rows are always written in configuration order.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if threads is None:
        threads = int(os.environ.get("FRACDG_THREADS", "1") or 1)
    threads = max(1, min(threads, len(cfg.k)))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_series, [cfg] * len(cfg.k), cfg.k))
    else:
        results = [_series(cfg, k) for k in cfg.k]

    csv_path = out / f"{cfg.case}_{cfg.mesh}.csv"
    failures: dict[int, str] = {}
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k, (rows, plot, reason) in zip(cfg.k, results):
            for row in rows:
                w.writerow([_fmt(row[c]) if c in row else "" for c in CSV_COLUMNS])
            if reason:
                failures[k] = reason
            if plot and "err_u" in plot[0]:
                with open(out / f"{cfg.case}_{cfg.mesh}_k{k}_convergence.dat", "w") as pf:
                    pf.write("# ndof err_u err_p err_pG super_p super_pG\n")
                    for r in plot:
                        ndof = r["ndof_u"] + r["ndof_p"] + r["ndof_pG"]
                        errs = " ".join(_fmt(r[c]) for c in ("err_u", "err_p", "err_pG", "super_p", "super_pG"))
                        pf.write(f"{ndof} {errs}\n")
    if failures:
        with open(out / f"{cfg.case}_{cfg.mesh}_failures.txt", "w") as fh:
            for k, reason in failures.items():
                fh.write(f"k={k}: {reason}\n")
    return csv_path, failures


def config_dict(cfg: StudyConfig) -> dict:
    return asdict(cfg)


__all__ = [
    "CSV_COLUMNS",
    "MESH_KINDS",
    "StudyConfig",
    "build_mesh",
    "config_dict",
    "run_study",
    "solve_case",
    "write_samples",
]
