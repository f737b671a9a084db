"""Command-line entry point: ``eigensplat <subcommand> ...``.

Subcommands: features, densify, eval-c2c, eval-psnr, synth. Bad flags exit
with status 2 (argparse), runtime failures with status 1 and a message on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .densify import (
    DEFAULT_ADAPTIVE_K,
    LN2,
    TRACE_COLUMNS,
    EventRecord,
    Schedule,
    SetExhausted,
    Thresholds,
    run_densification,
)
from .features import features_for_set
from .metrics import REPORT_COLUMNS, chamfer_c2c, psnr
from .plyio import load_gaussians, write_ply
from .pnm import read_pnm
from .sources import FileSource, SurfaceResidualSource, ZeroSource
from .spatial import build_index
from .synth import KINDS, gaussians_from_points, load_surface, save_surface, synth_scene

log = logging.getLogger("eigensplat")


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sidecar_path(ply_path) -> Path:
    """Where ``synth`` stores the reference surface of a scene written to ``ply_path``."""
    return Path(ply_path).with_suffix(".surface.json")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _k_value(s: str) -> int:
    v = int(s)
    if v < 2:
        raise argparse.ArgumentTypeError("k must be at least 2")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eigensplat", description="Eigenentropy-guided densification of Gaussian point sets.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("features", help="per-point eigenentropy of a PLY cloud")
    f.add_argument("--input", required=True)
    f.add_argument("--k", type=_k_value, default=50)
    f.add_argument("--output", help="PLY copy of the input with an eigenentropy channel")
    f.add_argument("--stats", help="CSV with the mean eigenentropy")
    f.add_argument("--format", choices=("binary_little_endian", "ascii"), default="binary_little_endian")

    d = sub.add_parser("densify", help="run alternating gradient/eigenentropy densification")
    d.add_argument("--input", required=True)
    kg = d.add_mutually_exclusive_group()
    kg.add_argument("--k", type=_k_value, help="fixed neighbourhood size")
    kg.add_argument("--k-adaptive", action="store_true", help="k steps 25/50/75/100 at t = 0/2500/5000/7500 (default)")
    d.add_argument("--iters", type=int, default=15000)
    d.add_argument("--pretrain", type=int, default=3000)
    d.add_argument("--period", type=_positive_int, default=100)
    d.add_argument("--tau-low", type=float, default=LN2)
    d.add_argument("--tau-high", type=float, default=0.95)
    d.add_argument("--tau-pos", type=float, default=0.0001)
    d.add_argument("--opacity-min", type=float, default=0.005)
    d.add_argument("--grad-source", default="zero", help="zero | file:PATH | surface")
    d.add_argument("--surface", help="reference surface JSON for --grad-source surface (default: <input>.surface.json)")
    d.add_argument("--grad-gain", type=float, default=0.01, help="gain of the surface residual source")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--output", required=True)
    d.add_argument("--trace", help="per-event trace CSV")
    d.add_argument("--format", choices=("binary_little_endian", "ascii"), default="binary_little_endian")

    c = sub.add_parser("eval-c2c", help="masked Chamfer cloud-to-cloud distance")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--mask", type=float, required=True, help="exclusion radius in scene units")
    c.add_argument("--report", help="CSV report")

    q = sub.add_parser("eval-psnr", help="PSNR between two PGM/PPM images")
    q.add_argument("--ref", required=True)
    q.add_argument("--test", required=True)

    s = sub.add_parser("synth", help="write a seeded synthetic scene")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--n", type=_positive_int, default=2000)
    s.add_argument("--noise", type=float, default=0.002)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--clutter-ratio", type=float)
    s.add_argument("--init", choices=("pca", "isotropic"), default="pca", help="initial Gaussian shapes")
    s.add_argument("--output", required=True)
    s.add_argument("--format", choices=("binary_little_endian", "ascii"), default="binary_little_endian")
    return p


def cmd_features(args) -> int:
    gs = load_gaussians(args.input)
    feats = features_for_set(gs, build_index(gs.centers), args.k)
    mean = float(np.mean(feats.eigenentropy))
    if args.output:
        write_ply(gs, args.output, args.format, eigenentropy=feats.eigenentropy)
    if args.stats:
        with open(args.stats, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "k", "mean_eigenentropy", "n_degenerate"])
            w.writerow([len(gs), args.k, _fmt(mean), int(feats.degenerate.sum())])
    print(f"mean_eigenentropy={mean!r}")
    return 0


def _grad_source(args):
    spec = args.grad_source
    if spec == "zero":
        return ZeroSource()
    if spec.startswith("file:"):
        return FileSource(spec[5:])
    if spec == "surface":
        path = args.surface or sidecar_path(args.input)
        return SurfaceResidualSource(load_surface(path), args.grad_gain)
    raise ValueError(f"unknown gradient source {spec!r}; expected zero, file:PATH or surface")


def write_trace(path, trace: list[EventRecord], header: dict) -> None:
    with open(path, "w", newline="") as fh:
        for key, val in header.items():
            fh.write(f"# {key}={_fmt(val)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow([_fmt(rec.phase.value if c == "phase" else getattr(rec, c)) for c in TRACE_COLUMNS])


def cmd_densify(args) -> int:
    thr = Thresholds(args.tau_low, args.tau_high, args.tau_pos, args.opacity_min)
    knn = args.k if args.k is not None else DEFAULT_ADAPTIVE_K
    sched = Schedule(args.pretrain, args.period, args.iters, knn)
    src = _grad_source(args)
    gs = load_gaussians(args.input)
    header = {
        "tau_low": thr.tau_low,
        "tau_high": thr.tau_high,
        "tau_pos": thr.tau_pos,
        "opacity_min": thr.opacity_min,
        "k": "adaptive" if args.k is None else args.k,
        "iters": args.iters,
        "pretrain": args.pretrain,
        "period": args.period,
        "grad_source": args.grad_source,
        "seed": args.seed,
    }
    status = 0
    try:
        res = run_densification(gs, sched, thr, src, rng_seed=args.seed)
        out, trace = res.gaussians, res.trace
    except SetExhausted as exc:
        out, trace = exc.gaussians, exc.trace
        header["status"] = "set exhausted"
        print("eigensplat: error: set exhausted", file=sys.stderr)
        status = 1
    if args.trace:
        write_trace(args.trace, trace, header)
    if status == 0:
        write_ply(out, args.output, args.format)
        print(f"events={len(trace)} n_before={len(gs)} n_after={len(out)}")
    return status


def cmd_eval_c2c(args) -> int:
    a = load_gaussians(args.a).centers
    b = load_gaussians(args.b).centers
    rep = chamfer_c2c(a, b, args.mask)
    row = rep.as_row()
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    print(f"symmetric_mean={_fmt(rep.symmetric_mean)}")
    return 0


def cmd_eval_psnr(args) -> int:
    val = psnr(read_pnm(args.ref), read_pnm(args.test))
    print("psnr_db=inf" if math.isinf(val) else f"psnr_db={val!r}")
    return 0


def cmd_synth(args) -> int:
    scene = synth_scene(args.kind, args.n, args.noise, args.seed, clutter_ratio=args.clutter_ratio)
    gs = gaussians_from_points(scene.points, init=args.init)
    write_ply(gs, args.output, args.format)
    save_surface(scene.surface, sidecar_path(args.output))
    print(f"n={len(gs)} clutter={int(scene.clutter.sum())}")
    return 0


COMMANDS = {
    "features": cmd_features,
    "densify": cmd_densify,
    "eval-c2c": cmd_eval_c2c,
    "eval-psnr": cmd_eval_psnr,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"eigensplat: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
