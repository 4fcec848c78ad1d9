"""Command-line entry point: ``fracdg run``, ``fracdg mesh`` and ``fracdg check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import checks
from .mesh import generate_uniform, generate_voronoi, map_anisotropic, perturb_small_edges, quality, build_staggered
from .study import MESH_KINDS, StudyConfig, run_study


def load_config(path: str) -> dict:
    """Read a TOML or JSON configuration file mirroring the ``run`` flags."""
    p = Path(path)
    if p.suffix.lower() == ".json":
        return json.loads(p.read_text())
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def _int_list(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _cmd_run(args: argparse.Namespace) -> int:
    settings: dict = load_config(args.config) if args.config else {}
    for key in ("case", "mesh", "k", "levels", "out", "d_ratio", "seed", "n0", "lloyd_iters", "method"):
        val = getattr(args, key)
        if val is not None:
            settings[key] = val
    missing = [k for k in ("case", "mesh") if k not in settings]
    if missing:
        print(f"error: missing {', '.join(missing)} (flag or config)", file=sys.stderr)
        return 2
    try:
        cfg = StudyConfig.from_mapping(settings)
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    csv_path, failures = run_study(cfg, threads=args.threads)
    print(f"wrote {csv_path}")
    for k, reason in failures.items():
        print(f"series k={k} failed: {reason.splitlines()[0]}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_mesh(args: argparse.Namespace) -> int:
    fx = None if args.no_fracture else args.fracture_x
    if args.gen in ("tri", "rect"):
        mesh = generate_uniform(args.gen, args.n, fx)
    elif args.gen == "cvt":
        mesh = generate_voronoi(args.seeds or 4 * args.n**2, fx, args.lloyd_iters, args.seed)
    elif args.gen == "perturbed":
        mesh = perturb_small_edges(generate_uniform("rect", args.n, fx), args.d_ratio)
    elif args.gen == "mapped-rect":
        mesh = map_anisotropic(generate_uniform("rect", args.n, fx))
    elif args.gen == "mapped-cvt":
        mesh = map_anisotropic(generate_voronoi(args.seeds or 4 * args.n**2, fx, args.lloyd_iters, args.seed))
    else:
        print(f"error: unknown generator {args.gen!r}", file=sys.stderr)
        return 2
    mesh.save(args.out)
    q = quality(build_staggered(mesh))
    print(f"wrote {args.out}: {mesh.n_cells} cells, {q.summary()}")
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    results = checks.run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracdg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a refinement study")
    run.add_argument("--case")
    run.add_argument("--mesh", choices=MESH_KINDS)
    run.add_argument("--k", type=_int_list, help="comma-separated degrees, e.g. 1,2,3")
    run.add_argument("--levels", type=int)
    run.add_argument("--out")
    run.add_argument("--d-ratio", dest="d_ratio", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--n0", type=int, help="subdivisions at level 0")
    run.add_argument("--lloyd-iters", dest="lloyd_iters", type=int)
    run.add_argument("--method", choices=("condensed", "full"))
    run.add_argument("--config", help="TOML or JSON file with the same keys")
    run.add_argument("--threads", type=int, help="worker processes (default FRACDG_THREADS or 1)")
    run.set_defaults(func=_cmd_run)

    mesh = sub.add_parser("mesh", help="generate a mesh and save it as JSON")
    mesh.add_argument("--gen", required=True, choices=[k for k in MESH_KINDS if k != "unfitted"])
    mesh.add_argument("--n", type=int, default=8)
    mesh.add_argument("--seeds", type=int, help="Voronoi generators (default 4 n^2)")
    mesh.add_argument("--fracture-x", dest="fracture_x", type=float, default=0.5)
    mesh.add_argument("--no-fracture", action="store_true")
    mesh.add_argument("--d-ratio", dest="d_ratio", type=float, default=0.001)
    mesh.add_argument("--seed", type=int, default=0)
    mesh.add_argument("--lloyd-iters", dest="lloyd_iters", type=int, default=100)
    mesh.add_argument("--out", required=True)
    mesh.set_defaults(func=_cmd_mesh)

    check = sub.add_parser("check", help="run the invariant suite on small meshes")
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
