"""Command-line front end: ``leaky-asm {stabilize,krw,shape,verify,render}``.

Every run writes its artifacts to ``--out`` and finishes with a
``manifest.json`` listing them.  A flat ``key = value`` file passed with
``--config`` supplies defaults for any flag; explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, io, krw, shape, verify
from .sandpile import (FLOAT, RATIONAL, GridOverflowError, HeightField, ToppleRule,
                       point_source, stabilize)


def _weights(text: str) -> tuple:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("weights need four values: up,right,down,left")
    return tuple(parts)


def _num(text: str, mode: str):
    return Fraction(text) if mode == RATIONAL else float(text)


def _rule(args, mode: str = FLOAT) -> ToppleRule:
    w = [_num(x, mode) for x in args.weights]
    return ToppleRule(*w, d=_num(args.d, mode))


def _g(v):
    """Round floats to twelve significant digits for console output."""
    if isinstance(v, float):
        return float(f"{v:.12g}") if math.isfinite(v) else str(v)
    if isinstance(v, (list, tuple)):
        return [_g(x) for x in v]
    if isinstance(v, dict):
        return {k: _g(x) for k, x in v.items()}
    if isinstance(v, (np.generic,)):
        return _g(v.item())
    if isinstance(v, Fraction):
        return io.fmt(v)
    return v


def _print(obj):
    print(json.dumps(_g(obj)))


class Run:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list = []
        self.timings: dict = {}
        self._t0 = time.perf_counter()

    def add(self, path):
        self.files.append(str(Path(path)))
        return path

    def time(self, label, fn, *a, **k):
        t = time.perf_counter()
        out = fn(*a, **k)
        self.timings[label] = time.perf_counter() - t
        return out

    def finish(self):
        self.timings["total"] = time.perf_counter() - self._t0
        flags = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = {
            "subcommand": self.args.command,
            "flags": flags,
            "output_dir": str(self.out.resolve()),
            "version": __version__,
            "timings": self.timings,
            "files": self.files,
        }
        io.write_json(manifest, self.out / "manifest.json")


def cmd_stabilize(args) -> int:
    run = Run(args)
    mode = args.mode
    rule = _rule(args, mode)
    n = args.n
    radius = args.radius if args.radius is not None else 1
    field = point_source(n, radius, mode)
    res = run.time("stabilize", stabilize, field, rule, grow=args.radius is None,
                   order=args.order, seed=args.seed)
    run.add(io.write_heights_csv(res, run.out / "heights.csv"))
    run.add(io.write_odometer_csv(res, run.out / "odometer.csv"))
    summary = res.summary()
    fm = res.final.total_mass()
    summary["final_mass"] = io.fmt(fm) if mode == RATIONAL else fm
    run.add(io.write_json(summary, run.out / "summary.json"))
    if args.render:
        run.add(io.render_ppm(res, run.out / "final.ppm"))
    run.finish()
    _print(summary)
    return 0


def cmd_krw(args) -> int:
    run = Run(args)
    if args.closed_form:
        d = float(args.d)
        if args.closed_form == "ne":
            p = krw.death_prob_ne(args.i, args.j, d)
            rows = [["ne", args.i, args.j, p]]
        elif args.closed_form == "line":
            p = krw.line_death_prob(args.j, d)
            rows = [["line", "", args.j, p]]
        else:
            a = Fraction(args.a)
            p = math.exp(krw.death_prob_contour(args.r, a, d))
            rows = [["contour", args.r, str(a), p]]
        run.add(io.write_rows_csv(run.out / "closed_form.csv", ["kind", "arg1", "arg2", "p"], rows))
        run.add(io.write_json({"d": d, "kind": args.closed_form, "p": p},
                              run.out / "closed_form.json"))
        run.finish()
        _print(p)
        return 0
    rule = _rule(args, RATIONAL if args.exact else FLOAT)
    fld = run.time("dp", krw.death_prob_dp, rule, args.radius, args.tail_eps, exact=args.exact)
    run.add(io.write_logp_csv(fld, run.out / "log_p.csv"))
    meta = fld.metadata()
    meta["total"] = fld.total()
    run.add(io.write_json(meta, run.out / "krw.json"))
    run.finish()
    _print(meta)
    return 0


def cmd_shape(args) -> int:
    run = Run(args)
    d = float(args.d)
    out = {}
    if args.curve == "uniform":
        lc = shape.limit_curve(d, args.samples)
        run.add(io.write_rows_csv(run.out / "curve_octant.csv", ["a", "x", "y"], lc.to_rows()))
        run.add(io.write_rows_csv(run.out / "curve_closed.csv", ["x", "y"], lc.closed.tolist()))
        run.add(io.write_json([shape.saddle(a, d).to_dict() for a in lc.a],
                              run.out / "saddle.json"))
        out = {"x_axis": float(lc.x[0]), "x_diag": float(lc.x[-1])}
    elif args.curve == "ne":
        lc = shape.ne_curve(d, args.samples)
        run.add(io.write_rows_csv(run.out / "ne_octant.csv", ["a", "x", "y"], lc.to_rows()))
        run.add(io.write_rows_csv(run.out / "ne_closed.csv", ["x", "y"], lc.closed.tolist()))
        out = {"x_axis": float(lc.x[0]), "x_diag": float(lc.x[-1])}
    elif args.curve == "amoeba":
        pts = shape.amoeba_gas_boundary(d, args.samples)
        run.add(io.write_rows_csv(run.out / "amoeba.csv", ["log_z", "log_w"], pts.tolist()))
        out = {"log_w_min": float(pts[:, 1].min()), "log_w_max": float(pts[:, 1].max())}
    elif args.curve == "dual":
        rep = shape.dual_check(d)
        out = rep.to_dict()
        run.add(io.write_rows_csv(
            run.out / "dual.csv", ["a", "x_numeric", "y_numeric", "x_expected", "y_expected"],
            np.column_stack([rep.a, rep.dual_numeric, rep.dual_expected]).tolist()))
        run.add(io.write_json(out, run.out / "dual.json"))
    if args.n is not None:
        n = float(args.n)
        band = shape.radial_band(n, d, np.linspace(0, 1, args.samples))
        L = shape.scale_length(n, args.scale)
        lc = shape.limit_curve(d, args.samples)
        rows = zip(band.a, band.r_inner, band.r_outer, L * lc.x)
        run.add(io.write_rows_csv(run.out / "band.csv", ["a", "r_inner", "r_outer", "r_curve"],
                                  rows))
        out["scale_length"] = L
    run.finish()
    _print(out)
    return 0


def _suite_options(args) -> dict:
    o = {}
    if args.n is not None:
        vals = [float(x) for x in str(args.n).split(",")]
        o["n"] = vals if len(vals) > 1 else vals[0]
    if args.d is not None:
        o["d"] = args.d
    if args.t is not None:
        o["t"] = [float(x) for x in str(args.t).split(",")]
    if args.weights is not None:
        o["weights"] = tuple(Fraction(w) for w in args.weights)
    return o


def cmd_verify(args) -> int:
    run = Run(args)
    suites = list(verify.SUITES) if args.suite == "all" else [args.suite]
    results = run.time("verify", verify.run_suites, suites, _suite_options(args))
    ok = True
    for suite, reports in results.items():
        for k, rep in enumerate(reports):
            run.add(io.write_json(rep.to_dict(), run.out / f"report_{suite}_{k}.json"))
            for line in rep.summary_lines():
                print(line)
            ok &= rep.passed
    run.add(io.write_json({"passed": ok, "suites": suites}, run.out / "verify.json"))
    run.finish()
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_render(args) -> int:
    run = Run(args)
    field = io.read_heights_csv(args.heights)
    visited = None
    if args.odometer:
        R = field.radius
        visited = np.zeros(field.cells.shape, bool)
        with open(args.odometer, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                x, y = int(row["x"]), int(row["y"])
                if max(abs(x), abs(y)) > R:
                    field = field.padded(max(abs(x), abs(y)))
                    visited = np.pad(visited, field.radius - R)
                    R = field.radius
                visited[x + R, y + R] = True
    thr = float(args.threshold) if args.threshold else float(_rule(args).threshold)
    run.add(io.render_ppm(field, run.out / args.image, threshold=thr, visited=visited))
    run.finish()
    print(run.files[0])
    return 0


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leaky-asm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file with flag defaults")
        sp.add_argument("--out", default="out", help="output directory")
        return sp

    s = common(sub.add_parser("stabilize", help="stabilize n chips at the origin"))
    s.add_argument("--n", required=True, help="chip count, e.g. 1e100")
    s.add_argument("--d", default="2")
    s.add_argument("--weights", type=_weights, default=("1", "1", "1", "1"))
    s.add_argument("--mode", choices=[FLOAT, RATIONAL], default=FLOAT)
    s.add_argument("--radius", type=int, help="fixed grid radius (default: grow as needed)")
    s.add_argument("--order", choices=["fifo", "random"], default="fifo")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--render", action="store_true", help="also write final.ppm")
    s.set_defaults(func=cmd_stabilize)

    k = common(sub.add_parser("krw", help="killed random walk death probabilities"))
    k.add_argument("--d", default="2")
    k.add_argument("--weights", type=_weights, default=("1", "1", "1", "1"))
    k.add_argument("--radius", type=int)
    k.add_argument("--tail-eps", type=float, default=1e-30)
    k.add_argument("--exact", action="store_true", help="exact integer DP")
    k.add_argument("--closed-form", choices=["ne", "line", "contour"])
    k.add_argument("--i", type=int, default=0)
    k.add_argument("--j", type=int, default=0)
    k.add_argument("--r", type=int, default=0)
    k.add_argument("--a", default="0")
    k.set_defaults(func=cmd_krw)

    h = common(sub.add_parser("shape", help="limit curves, bands, amoeba and duality"))
    h.add_argument("--d", default="2")
    h.add_argument("--samples", type=int, default=65)
    h.add_argument("--curve", choices=["uniform", "ne", "amoeba", "dual"], default="uniform")
    h.add_argument("--n", help="chip count for the radial band")
    h.add_argument("--scale", choices=list(shape.SCALES), default="logn-halfloglogn")
    h.set_defaults(func=cmd_shape)

    v = common(sub.add_parser("verify", help="run verification suites"))
    v.add_argument("--suite", choices=list(verify.SUITES) + ["all"], default="all")
    v.add_argument("--n", help="chip count or comma-separated sweep")
    v.add_argument("--d")
    v.add_argument("--t", help="comma-separated leak values for the leak suite")
    v.add_argument("--weights", type=_weights)
    v.set_defaults(func=cmd_verify)

    r = common(sub.add_parser("render", help="render a heights CSV as a PPM image"))
    r.add_argument("--heights", required=True)
    r.add_argument("--odometer", help="odometer CSV marking visited sites")
    r.add_argument("--threshold", help="toppling threshold (default c*d from --d/--weights)")
    r.add_argument("--d", default="2")
    r.add_argument("--weights", type=_weights, default=("1", "1", "1", "1"))
    r.add_argument("--image", default="render.ppm")
    r.set_defaults(func=cmd_render)
    return p


def _config_path(argv):
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    if path is None:
        return parser.parse_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in subs), None)
    if command is None:
        return parser.parse_args(argv)
    sp = subs[command]
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in read_config(path).items():
        if key not in known:
            raise SystemExit(f"unknown config key {key!r}")
        act = known[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        elif act.type is not None:
            defaults[key] = act.type(val)
        else:
            defaults[key] = val
    sp.set_defaults(**defaults)
    for act in sp._actions:
        if act.dest in defaults:
            act.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        return args.func(args)
    except (OverflowError, GridOverflowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
