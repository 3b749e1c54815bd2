"""Batch command-line front end.

Every data output is written atomically (temp file + rename) and paired
with a `<output>.manifest.json` recording the command, its full parameter
set, the input hash, tool version, wall time, and thread count, so runs
can be reproduced bit-exactly.

Angles are accepted as radians (`1.5708`) or as multiples of pi
(`0.5pi`). The default worker count comes from POINTSHAPE_THREADS.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .denoise import FilterConfig, NoiseSpec, add_normal_noise, denoise_report, filter_normals, mse, write_denoise_csv
from .features import classify as classify_features
from .geometry import GeometryError, PointCloud, compute_vertex_normals
from .io import ParseError, load_cloud, load_mesh, save_cloud, save_mesh
from .knn import NeighborIndex
from .optimizer import (
    ParameterGrid,
    default_grid,
    evaluate_cloud,
    optimize_cloud,
    write_optima_csv,
)
from .stats import summary_report, write_ab_hist_svg, write_k_hist_svg
from .synthetic import SHAPES, generate_synthetic


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage failures exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def parse_angle(text: str) -> float:
    t = text.strip().lower()
    if t.endswith("pi"):
        head = t[:-2]
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _angle_list(text: str):
    return [parse_angle(t) for t in text.split(",") if t.strip()]


def _int_list(text: str):
    return [int(t) for t in text.split(",") if t.strip()]


def _default_threads() -> int:
    return max(1, int(os.environ.get("POINTSHAPE_THREADS", "1")))


def _sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic(path, write_fn):
    """Run write_fn against a sibling temp file, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit_manifest(out_path, command, params, input_path, t0, threads):
    manifest = {
        "command": command,
        "params": params,
        "input_sha256": _sha256_of(input_path) if input_path else None,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t0,
        "threads": threads,
    }
    _atomic(
        str(out_path) + ".manifest.json",
        lambda tmp: json.dump(manifest, open(tmp, "w", encoding="utf-8"), indent=2),
    )


def _grid_from_args(args) -> ParameterGrid:
    base = default_grid()
    A = args.A if args.A is not None else base.A
    B = args.B if args.B is not None else base.B
    K = args.K if args.K is not None else base.K
    return ParameterGrid(A=A, B=B, K=K)


def _add_grid_flags(p):
    p.add_argument("--A", type=_angle_list, default=None,
                   help="comma list of lower thresholds (radians or Xpi)")
    p.add_argument("--B", type=_angle_list, default=None,
                   help="comma list of upper thresholds")
    p.add_argument("--K", type=_int_list, default=None,
                   help="comma list of neighbor counts")
    p.add_argument("--grid", choices=["default"], default="default",
                   help="named grid preset (overridden by --A/--B/--K)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    t0 = time.perf_counter()
    cloud = generate_synthetic(
        args.shape, args.samples,
        spacing=args.spacing, size=args.size, angle=args.angle,
    )
    _atomic(args.out, lambda tmp: save_cloud(cloud, tmp, binary=args.binary))
    _emit_manifest(args.out, "gen", {
        "shape": args.shape, "samples": args.samples, "spacing": args.spacing,
        "size": args.size, "angle": args.angle, "binary": args.binary,
        "out": args.out,
    }, None, t0, 1)
    return 0


def _cmd_convert(args) -> int:
    t0 = time.perf_counter()
    params = {"in": args.infile, "out": args.out, "binary": args.binary,
              "to_cloud": args.to_cloud}
    try:
        mesh = load_mesh(args.infile)
    except (ParseError, GeometryError, ValueError):
        mesh = None
    if mesh is not None and args.to_cloud:
        cloud = PointCloud(mesh.vertices, compute_vertex_normals(mesh))
        _atomic(args.out, lambda tmp: save_cloud(cloud, tmp, binary=args.binary))
    elif mesh is not None:
        _atomic(args.out, lambda tmp: save_mesh(
            mesh, tmp, fmt=os.path.splitext(args.out)[1][1:], binary=args.binary))
    else:
        cloud = load_cloud(args.infile)
        _atomic(args.out, lambda tmp: save_cloud(cloud, tmp, binary=args.binary))
    _emit_manifest(args.out, "convert", params, args.infile, t0, 1)
    return 0


def _cmd_classify(args) -> int:
    t0 = time.perf_counter()
    cloud = load_cloud(args.infile)
    index = NeighborIndex(cloud)
    E, lps = evaluate_cloud(cloud, index, args.a, args.b, args.k, threads=args.threads)

    def write(tmp):
        lines = ["index,x,y,z,E,L,P,S,class,degenerate"]
        for i in range(len(cloud)):
            p = cloud.points[i]
            if math.isinf(E[i]):
                body = "inf,nan,nan,nan,degenerate,true"
            else:
                f = lps[i]
                body = (f"{E[i]:.9g},{f[0]:.9g},{f[1]:.9g},{f[2]:.9g},"
                        f"{classify_features(f)},false")
            lines.append(f"{i},{p[0]:.9g},{p[1]:.9g},{p[2]:.9g},{body}")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    _atomic(args.out, write)
    _emit_manifest(args.out, "classify", {
        "in": args.infile, "a": args.a, "b": args.b, "k": args.k, "out": args.out,
    }, args.infile, t0, args.threads)
    return 0


def _cmd_optimize(args) -> int:
    t0 = time.perf_counter()
    cloud = load_cloud(args.infile)
    grid = _grid_from_args(args)
    optima, run = optimize_cloud(cloud, grid, threads=args.threads)
    _atomic(args.out, lambda tmp: write_optima_csv(tmp, cloud, optima))
    params = {"in": args.infile, "out": args.out, "grid": run["grid"],
              "cloud_sha256": run["cloud_sha256"]}
    _emit_manifest(args.out, "optimize", params, args.infile, t0, args.threads)
    return 0


def _cmd_stats(args) -> int:
    t0 = time.perf_counter()
    cloud = load_cloud(args.infile)
    grid = _grid_from_args(args)
    index = NeighborIndex(cloud)
    optima, _run = optimize_cloud(cloud, grid, threads=args.threads, index=index)
    name = args.name or os.path.basename(args.infile)
    report = summary_report(name, cloud, index, optima, grid, threads=args.threads)
    _atomic(args.out, lambda tmp: json.dump(
        report, open(tmp, "w", encoding="utf-8"), indent=2))
    params = {"in": args.infile, "out": args.out, "name": name,
              "grid": {"A": list(grid.A), "B": list(grid.B), "K": list(grid.K)}}
    _emit_manifest(args.out, "stats", params, args.infile, t0, args.threads)
    if args.svg:
        ab_path = args.svg + ".ab_hist.svg"
        k_path = args.svg + ".k_hist.svg"
        cells = [
            {"a": c["a"], "b": c["b"], "count": c["count"],
             "k_strata": {s["k"]: s["count"] for s in c["k_strata"]}}
            for c in report["ab_hist"]
        ]
        _atomic(ab_path, lambda tmp: write_ab_hist_svg(tmp, cells))
        _emit_manifest(ab_path, "stats", params, args.infile, t0, args.threads)
        fractions = {h["k"]: h["fraction"] for h in report["k"]["hist"]}
        _atomic(k_path, lambda tmp: write_k_hist_svg(tmp, fractions))
        _emit_manifest(k_path, "stats", params, args.infile, t0, args.threads)
    return 0


def _cmd_add_noise(args) -> int:
    t0 = time.perf_counter()
    cloud = load_cloud(args.infile)
    noisy = add_normal_noise(cloud, NoiseSpec(factor=args.factor, seed=args.seed))
    _atomic(args.out, lambda tmp: save_cloud(noisy, tmp, binary=args.binary))
    _emit_manifest(args.out, "add-noise", {
        "in": args.infile, "factor": args.factor, "seed": args.seed,
        "out": args.out, "binary": args.binary,
    }, args.infile, t0, 1)
    return 0


def _cmd_denoise(args) -> int:
    t0 = time.perf_counter()
    config = FilterConfig(p=args.p, tau=args.tau, rho=args.rho,
                          k_default=args.k_default, halfwidth=args.halfwidth)
    params = {"in": args.infile, "out": args.out, "p": args.p, "tau": args.tau,
              "rho": args.rho, "k_default": args.k_default,
              "halfwidth": args.halfwidth, "mode": args.mode}
    if args.report:
        mesh = load_mesh(args.infile)
        truth = compute_vertex_normals(mesh)
        cloud = PointCloud(mesh.vertices, truth)
        specs = [NoiseSpec(factor=f, seed=args.seed) for f in args.factors]
        name = os.path.splitext(os.path.basename(args.infile))[0]
        rows = denoise_report(cloud, truth, specs, config,
                              faces=mesh.faces, name=name)
        _atomic(args.out, lambda tmp: write_denoise_csv(tmp, rows))
        params.update({"report": True, "factors": args.factors, "seed": args.seed})
    else:
        cloud = load_cloud(args.infile)
        filtered = filter_normals(cloud, config, mode=args.mode)
        result = PointCloud(cloud.points, filtered)
        _atomic(args.out, lambda tmp: save_cloud(result, tmp, binary=args.binary))
    _emit_manifest(args.out, "denoise", params, args.infile, t0, args.threads)
    return 0


def _cmd_mse(args) -> int:
    t0 = time.perf_counter()
    truth = load_cloud(args.truth)
    test = load_cloud(args.test)
    value = mse(truth.normals, test.normals)
    print(f"{value:.9g}")
    if args.out:
        _atomic(args.out, lambda tmp: open(tmp, "w").write(f"{value:.9g}\n"))
        _emit_manifest(args.out, "mse", {
            "truth": args.truth, "test": args.test, "out": args.out,
        }, args.truth, t0, 1)
    return 0


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="pointshape", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic test cloud")
    p.add_argument("--shape", required=True, choices=SHAPES)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--size", type=float, default=1.0)
    p.add_argument("--angle", type=parse_angle, default=math.pi / 2)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("convert", help="convert between OBJ and PLY")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--to-cloud", action="store_true",
                   help="turn a mesh into a cloud with area-weighted vertex normals")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("classify", help="per-point features at one (a, b, k)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--a", type=parse_angle, required=True)
    p.add_argument("--b", type=parse_angle, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("optimize", help="per-point grid search")
    p.add_argument("--in", dest="infile", required=True)
    _add_grid_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("stats", help="corpus summary JSON (and optional SVGs)")
    p.add_argument("--in", dest="infile", required=True)
    _add_grid_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None)
    p.add_argument("--svg", default=None, help="prefix for SVG chart output")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("add-noise", help="displace points along their normals")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--factor", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=_cmd_add_noise)

    p = sub.add_parser("denoise", help="normal filtering (single run or MSE report)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--p", type=int, default=150)
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--rho", type=float, default=0.3)
    p.add_argument("--k-default", dest="k_default", type=int, default=15)
    p.add_argument("--halfwidth", type=int, default=10)
    p.add_argument("--mode", choices=["fixed", "adaptive"], default="fixed")
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--report", action="store_true",
                   help="input is a clean mesh; emit the noise/fixed/adaptive MSE table")
    p.add_argument("--factors", type=lambda s: [float(t) for t in s.split(",")],
                   default=[0.3, 0.6])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("mse", help="mean squared deviation between two normal fields")
    p.add_argument("--truth", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (GeometryError, ParseError, ValueError, OSError) as exc:
        print(f"pointshape: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
