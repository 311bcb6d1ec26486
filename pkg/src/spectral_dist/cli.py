"""Command-line interface: distance fields, kernel columns, backend comparison and scaling benchmarks.

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .filters import (
    FILTER_KINDS,
    Filter,
    IllConditionedBasisError,
    NotRepresentableError,
    PoleInIntervalError,
    from_json,
)
from .io import MeshParseError, export_field, load_mesh
from .laplacian import MASS_SCHEMES, laplacian_pair
from .mesh import MeshError, TriangleMesh
from .solvers import SolveOptions, SolverError
from .spectrum import EigensolverError, eigendecompose, truncated_distance_field, truncated_kernel_column
from .spectrum_free import IntervalMismatchError, build_evaluator, distance_field, kernel_column, spectrum_bound
from .shapes import sphere

THREADS_ENV = "SPECTRAL_DIST_THREADS"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    meshes: list
    filter: Filter | None = None
    rational_path: Path | None = None
    degree: tuple = (5, 5)
    backend: str = "spectrum-free"
    modes: int | None = None
    seed: int = 0
    source: str = "indicator"
    out: Path | None = None
    format: str | None = None
    mass_scheme: str = "barycentric-lumped"
    solver: SolveOptions = field(default_factory=lambda: SolveOptions(method="direct-cholesky"))
    report: Path | None = None
    threads: int | None = None
    sphere_sizes: list = field(default_factory=list)


def _parse_backend(text):
    if text in ("spectrum-free", "both"):
        return text, None
    if text.startswith("truncated:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad backend {text!r}; expected truncated:<k>") from None
        if k < 1:
            raise UsageError("truncated backend needs k >= 1")
        return "truncated", k
    if text == "truncated":
        return "truncated", None
    raise UsageError(f"unknown backend {text!r}; choose spectrum-free, truncated:<k> or both")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-dist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi_mesh=False):
        if multi_mesh:
            p.add_argument("--mesh", nargs="*", default=[], help="meshes in increasing size")
            p.add_argument("--sphere-sizes", nargs="*", type=int, default=[],
                           help="generate Fibonacci spheres with these vertex counts")
        else:
            p.add_argument("--mesh", required=True, help="OFF, OBJ or ASCII PLY triangle mesh")
        p.add_argument("--filter", choices=FILTER_KINDS, default="diffusion")
        p.add_argument("--t", type=float, default=None, help="diffusion scale")
        p.add_argument("--p", type=float, default=None, help="exponent of the power filter")
        p.add_argument("--rational", default=None,
                       help="JSON rational filter to use instead of fitting (spectrum-free backend)")
        p.add_argument("--degree", nargs=2, type=int, default=[5, 5], metavar=("L", "R"))
        p.add_argument("--backend", default="spectrum-free", help="spectrum-free, truncated:<k> or both")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--source", choices=("indicator", "unit-mass"), default="indicator",
                       help="point source: indicator e_i or unit-mass B^-1 e_i")
        p.add_argument("--mass", choices=MASS_SCHEMES, default="barycentric-lumped")
        p.add_argument("--solver", choices=("direct-cholesky", "conjugate-gradient"), default="direct-cholesky")
        p.add_argument("--preconditioner", choices=("none", "jacobi"), default="jacobi")
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--maxiter", type=int, default=None)
        p.add_argument("--report", default=None, help="write the JSON report here (stdout if omitted)")
        p.add_argument("--threads", type=int, default=None, help=f"BLAS thread cap (or ${THREADS_ENV})")

    for name, helptext in (("distance", "distance field from a seed vertex"),
                           ("kernel", "kernel column of a seed vertex")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--out", required=True, help="output field (.csv or .ply)")
        p.add_argument("--format", choices=("csv", "ply-scalar"), default=None)
    p = sub.add_parser("bench", help="wall-time scaling over meshes of increasing size")
    common(p, multi_mesh=True)
    return parser


def config_from_args(args) -> RunConfig:
    try:
        solver = SolveOptions(tol=args.tol, maxiter=args.maxiter, preconditioner=args.preconditioner,
                              method=args.solver)
    except ValueError as err:
        raise UsageError(str(err)) from None
    rational = Path(args.rational) if args.rational else None
    if rational is not None and not rational.exists():
        raise UsageError(f"rational filter file not found: {rational}")
    backend, modes = _parse_backend(args.backend)
    try:
        if rational is not None and backend != "spectrum-free":
            raise UsageError("--rational only applies to the spectrum-free backend")
        # a fitted rational file carries its own filter; the analytic one is only built when needed
        filt = None if rational is not None else Filter(
            args.filter, t=args.t if args.filter == "diffusion" else None,
            p=args.p if args.filter == "power" else None)
    except ValueError as err:
        raise UsageError(str(err)) from None
    meshes = args.mesh if isinstance(args.mesh, list) else [args.mesh]
    for m in meshes:
        if not Path(m).exists():
            raise UsageError(f"mesh file not found: {m}")
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    if threads is not None and threads < 1:
        raise UsageError("--threads must be at least 1")
    cfg = RunConfig(
        command=args.command, meshes=meshes, filter=filt, rational_path=rational, degree=tuple(args.degree),
        backend=backend, modes=modes, seed=args.seed, source=args.source, mass_scheme=args.mass,
        solver=solver, report=Path(args.report) if args.report else None, threads=threads,
    )
    if args.command == "bench":
        cfg.sphere_sizes = list(args.sphere_sizes)
        if not cfg.meshes and not cfg.sphere_sizes:
            raise UsageError("bench needs --mesh paths or --sphere-sizes")
    else:
        cfg.out = Path(args.out)
        cfg.format = args.format
        if cfg.out.parent and not cfg.out.parent.exists():
            raise UsageError(f"output directory does not exist: {cfg.out.parent}")
    if cfg.report is not None and not cfg.report.parent.exists():
        raise UsageError(f"report directory does not exist: {cfg.report.parent}")
    return cfg


def _evaluator(cfg, pair):
    filt = cfg.filter
    if cfg.rational_path is not None:
        try:
            filt = from_json(cfg.rational_path.read_text())
        except (ValueError, KeyError, TypeError) as err:
            raise UsageError(f"cannot read rational filter {cfg.rational_path}: {err}") from None
    return build_evaluator(pair, filt, degree=cfg.degree, options=cfg.solver)


def _truncated(cfg, pair, mesh):
    k = pair.n_vertices if cfg.modes is None or cfg.backend == "both" else cfg.modes
    if k > pair.n_vertices:
        raise UsageError(f"truncated:{k} exceeds the vertex count {pair.n_vertices}")
    return eigendecompose(pair, k)


def _compute_field(cfg, mesh: TriangleMesh):
    if not 0 <= cfg.seed < mesh.n_vertices:
        raise UsageError(f"seed {cfg.seed} out of range for {mesh.n_vertices} vertices")
    pair = laplacian_pair(mesh, cfg.mass_scheme)
    rep = {"lambda_max_bound": spectrum_bound(pair)}
    fields = {}
    if cfg.backend in ("spectrum-free", "both"):
        t0 = time.perf_counter()
        ev = _evaluator(cfg, pair)
        if cfg.command == "distance":
            fields["spectrum-free"] = distance_field(ev, cfg.seed, cfg.source)
        else:
            fields["spectrum-free"] = kernel_column(ev, cfg.seed, cfg.source)
        info = ev.report()
        rep["sigma"] = info["sigma"]
        rep["solve"] = {k: v for k, v in info.items() if k not in ("sigma", "lambda_max_bound", "filter", "degree")}
        rep["solve"]["seconds"] = time.perf_counter() - t0
    if cfg.backend in ("truncated", "both"):
        t0 = time.perf_counter()
        spec = _truncated(cfg, pair, mesh)
        if cfg.command == "distance":
            fields["truncated"] = truncated_distance_field(spec, cfg.filter, cfg.seed, cfg.source)
        else:
            fields["truncated"] = truncated_kernel_column(spec, cfg.filter, cfg.seed, cfg.source)
        rep["truncated"] = {"modes": spec.n_modes, "seconds": time.perf_counter() - t0}
    if cfg.backend == "both":
        diff = float(np.max(np.abs(fields["spectrum-free"] - fields["truncated"])))
        tol = max(1e-6, 2 * rep["sigma"])
        rep["backend_discrepancy"] = {"max_abs": diff, "tolerance": tol, "within_tolerance": diff <= tol}
    primary = fields["spectrum-free"] if "spectrum-free" in fields else fields["truncated"]
    return primary, rep


def run_field(cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    mesh = load_mesh(cfg.meshes[0])
    values, rep = _compute_field(cfg, mesh)
    export_field(mesh, values, cfg.out, cfg.format)
    report = {
        "command": cfg.command,
        "version": __version__,
        "mesh": {"path": str(cfg.meshes[0]), "n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles},
        "filter": cfg.filter.to_dict() if cfg.rational_path is None else {"rational": str(cfg.rational_path)},
        "degree": list(cfg.degree),
        "backend": cfg.backend if cfg.modes is None else f"truncated:{cfg.modes}",
        "seed": cfg.seed,
        "source": cfg.source,
        "output": str(cfg.out),
        "min_value": float(np.min(values)),
        "max_value": float(np.max(values)),
        **rep,
    }
    report["wall_time_seconds"] = time.perf_counter() - t0
    return report


def run_bench(cfg: RunConfig) -> dict:
    t_start = time.perf_counter()
    meshes = [(str(p), load_mesh(p)) for p in cfg.meshes]
    meshes += [(f"sphere:{n}", sphere(n)) for n in cfg.sphere_sizes]
    meshes.sort(key=lambda item: item[1].n_vertices)
    rows = []
    for name, mesh in meshes:
        pair = laplacian_pair(mesh, cfg.mass_scheme)
        row = {"mesh": name, "n_vertices": mesh.n_vertices}
        if cfg.backend in ("spectrum-free", "both"):
            t0 = time.perf_counter()
            ev = _evaluator(cfg, pair)
            t1 = time.perf_counter()
            kernel_column(ev, cfg.seed % mesh.n_vertices, cfg.source)
            t2 = time.perf_counter()
            distance_field(ev, cfg.seed % mesh.n_vertices, cfg.source)
            t3 = time.perf_counter()
            row["spectrum_free"] = {"setup_seconds": t1 - t0, "kernel_column_seconds": t2 - t1,
                                    "distance_field_seconds": t3 - t2, "sigma": ev.sigma, "path": ev.path}
        if cfg.backend in ("truncated", "both"):
            k = min(cfg.modes or mesh.n_vertices, mesh.n_vertices)
            t0 = time.perf_counter()
            spec = eigendecompose(pair, k)
            t1 = time.perf_counter()
            truncated_distance_field(spec, cfg.filter, cfg.seed % mesh.n_vertices, cfg.source)
            t2 = time.perf_counter()
            row["truncated"] = {"modes": k, "eigendecomposition_seconds": t1 - t0,
                                "distance_field_seconds": t2 - t1}
        rows.append(row)
    report = {"command": "bench", "version": __version__,
              "filter": cfg.filter.to_dict() if cfg.rational_path is None else {"rational": str(cfg.rational_path)},
              "degree": list(cfg.degree), "backend": cfg.backend if cfg.modes is None else f"truncated:{cfg.modes}",
              "rows": rows, "slopes": {}}
    n = np.array([r["n_vertices"] for r in rows], dtype=float)
    if len(rows) >= 2 and len(np.unique(n)) >= 2:
        def slope(values):
            return float(np.polyfit(np.log(n), np.log(np.maximum(values, 1e-9)), 1)[0])

        if "spectrum_free" in rows[0]:
            report["slopes"]["spectrum_free_kernel_column"] = slope([r["spectrum_free"]["kernel_column_seconds"]
                                                                      for r in rows])
            report["slopes"]["spectrum_free_distance_field"] = slope(
                [r["spectrum_free"]["setup_seconds"] + r["spectrum_free"]["distance_field_seconds"] for r in rows])
        if "truncated" in rows[0]:
            report["slopes"]["truncated_total"] = slope(
                [r["truncated"]["eigendecomposition_seconds"] + r["truncated"]["distance_field_seconds"]
                 for r in rows])
    report["wall_time_seconds"] = time.perf_counter() - t_start
    return report


def _emit(report, path):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        with threadpool_limits(limits=cfg.threads):
            report = run_bench(cfg) if cfg.command == "bench" else run_field(cfg)
        _emit(report, cfg.report)
    except (UsageError, FileNotFoundError, MeshParseError, MeshError, IndexError, IntervalMismatchError) as err:
        print(f"spectral-dist: error: {err}", file=sys.stderr)
        return 2
    except (SolverError, EigensolverError, PoleInIntervalError, IllConditionedBasisError,
            NotRepresentableError, np.linalg.LinAlgError, ArithmeticError) as err:
        print(f"spectral-dist: numerical failure: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
