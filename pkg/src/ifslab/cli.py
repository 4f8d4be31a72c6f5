"""Command-line driver: simulation, verification, export, and the map figure.

Exit codes: 0 success, 2 validation error (one-line diagnostic naming the
offending flag), 3 when `verify` ran but an acceptance criterion failed (the
report is still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .pwl_core import am_ifs
from .measure_ops import (
    DepthExceededError,
    DiscreteMeasure,
    TestFunction,
    cesaro_dual,
    dual_apply,
    push_n,
)
from .mc_sim import (
    CLASS_NAMES,
    GENERATOR_NAME,
    SymbolStream,
    ensemble,
    run_ensemble,
    trajectory_points,
    trajectory_stats,
)
from .sync import ks_uniform, upsilon_sample
from .verify import acceptance_suite, drift_check, echain_modulus, slln_gap
from .svgfig import render_maps_svg

SCHEMA_VERSION = 1
DEFAULT_SEED = 42
C_MARGIN = 1e-6


class CliError(Exception):
    """Validation failure; message names the offending flag."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"--out: cannot write {out!r} ({exc.strerror})")


def _json_doc(command: str, params: dict, body: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "params": _jsonable(params)}
    doc.update(_jsonable(body))
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return "%.17g" % v


def _resolve_seed(args) -> int:
    if args.seed is not None:
        if args.seed < 0:
            raise CliError("--seed: must be >= 0")
        return args.seed
    env = os.environ.get("IFSLAB_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise CliError(f"IFSLAB_SEED: not an integer: {env!r}")
        if seed < 0:
            raise CliError("IFSLAB_SEED: must be >= 0")
        return seed
    return DEFAULT_SEED


def _resolve_c(args) -> float:
    c = args.c
    if not (0.0 < c < 0.5):
        raise CliError(f"--c: must lie strictly between 0 and 0.5, got {c:g}")
    if not args.force and not (C_MARGIN <= c <= 0.5 - C_MARGIN):
        raise CliError(
            f"--c: {c:g} is within {C_MARGIN:g} of the boundary; defaults may not "
            "converge there, pass --force to proceed"
        )
    return c


def _resolve_format(args, allowed: tuple[str, ...], default: str) -> str:
    fmt = args.format or default
    if fmt not in allowed:
        raise CliError(f"--format: {fmt!r} not supported here (choose from {', '.join(allowed)})")
    return fmt


def _parse_testfn(text: str, flag: str) -> TestFunction:
    try:
        return TestFunction.parse(text)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        raise CliError(f"{flag}: {exc}")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CliError(msg)


# -- subcommand bodies ----------------------------------------------------


def _cmd_simulate(args) -> int:
    c = _resolve_c(args)
    seed = _resolve_seed(args)
    _require(0.0 <= args.x <= 1.0, f"--x: must lie in [0, 1], got {args.x:g}")
    _require(args.n >= 1, "--n: must be >= 1")
    _require(args.m >= 1, "--m: must be >= 1")
    ifs = am_ifs(c)
    phi = _parse_testfn(args.phi, "--phi") if args.phi else None

    if args.m == 1:
        fmt = _resolve_format(args, ("csv", "json"), "csv")
        stream = SymbolStream.random(ifs.weights, seed, args.stream_index)
        if fmt == "csv":
            pts = trajectory_points(ifs, args.x, args.n, stream)
            rows = (
                (k, _fmt(p.value), _fmt(p.complement)) for k, p in enumerate(pts)
            )
            _emit(_csv_text(["step", "state", "one_minus_state"], rows), args.out)
        else:
            stats = trajectory_stats(ifs, args.x, args.n, stream, phi=phi)
            params = {
                "c": c, "x": args.x, "n": args.n, "seed": seed,
                "stream_index": args.stream_index, "generator": GENERATOR_NAME,
                "phi": phi.descriptor if phi else None,
            }
            _emit(_json_doc("simulate", params, {"trajectory": stats.to_dict()}), args.out)
        return 0

    fmt = _resolve_format(args, ("csv", "json"), "json")
    if fmt == "json":
        rep = ensemble(ifs, phi, args.x, args.n, args.m, seed)
        _emit(_json_doc("simulate", {"c": c}, {"ensemble": rep.to_dict()}), args.out)
    else:
        res = run_ensemble(ifs, phi, args.x, args.n, args.m, seed)
        rows = (
            (
                j,
                _fmt(res.final_values[j]),
                _fmt(res.final_complements[j]),
                _fmt(res.birkhoff_values[j]) if res.birkhoff_values is not None else "",
                CLASS_NAMES[int(res.classifications[j])],
            )
            for j in range(args.m)
        )
        header = ["stream_index", "final_value", "final_complement", "birkhoff", "classification"]
        _emit(_csv_text(header, rows), args.out)
    return 0


def _cmd_pushforward(args) -> int:
    c = _resolve_c(args)
    _require(0.0 <= args.x <= 1.0, f"--x: must lie in [0, 1], got {args.x:g}")
    _require(args.n >= 0, "--n: must be >= 0")
    ifs = am_ifs(c)
    try:
        mu = push_n(ifs, args.x, args.n, merge_tol=args.merge_tol)
    except DepthExceededError as exc:
        raise CliError(f"--n: {exc}")
    fmt = _resolve_format(args, ("csv", "json"), "csv")
    if fmt == "csv":
        _emit(mu.to_csv(), args.out)
    else:
        params = {"c": c, "x": args.x, "n": args.n, "merge_tol": args.merge_tol}
        _emit(_json_doc("pushforward", params, {"measure": mu.to_json_obj()}), args.out)
    return 0


def _cmd_dual(args) -> int:
    c = _resolve_c(args)
    _require(0.0 <= args.x <= 1.0, f"--x: must lie in [0, 1], got {args.x:g}")
    _require(args.n >= 1, "--n: must be >= 1")
    ifs = am_ifs(c)
    phi = _parse_testfn(args.phi, "--phi")
    _resolve_format(args, ("json",), "json")
    try:
        value = dual_apply(ifs, phi, args.x, args.n)
        cesaro = cesaro_dual(ifs, phi, args.x, args.n)
    except DepthExceededError as exc:
        raise CliError(f"--n: {exc}")
    params = {"c": c, "x": args.x, "n": args.n, "phi": phi.descriptor}
    _emit(_json_doc("dual", params, {"dual_value": value, "cesaro_value": cesaro}), args.out)
    return 0


def _cmd_sync(args) -> int:
    c = _resolve_c(args)
    seed = _resolve_seed(args)
    _require(args.m >= 1, "--m: must be >= 1")
    _require(args.tol > 0.0, "--tol: must be > 0")
    _require(args.max_depth >= 1, "--max-depth: must be >= 1")
    ifs = am_ifs(c)
    samples = upsilon_sample(ifs, args.m, args.tol, args.max_depth, seed)
    fmt = _resolve_format(args, ("csv", "json"), "json")
    if fmt == "csv":
        rows = (
            (s.stream_index, _fmt(s.upsilon), s.depth_used, _fmt(s.gap)) for s in samples
        )
        _emit(_csv_text(["stream_index", "upsilon", "depth_used", "gap"], rows), args.out)
        return 0
    ks = ks_uniform([s.upsilon for s in samples])
    critical = 1.63 / math.sqrt(args.m)
    params = {
        "c": c, "m": args.m, "tol": args.tol, "max_depth": args.max_depth,
        "seed": seed, "generator": GENERATOR_NAME,
    }
    body = {
        "ks_statistic": ks,
        "ks_critical_1pct": critical,
        "pass": ks < critical,
        "unconverged": sum(1 for s in samples if not s.converged),
        "samples": [s.to_dict() for s in samples] if args.m <= 1000 else None,
    }
    _emit(_json_doc("sync", params, body), args.out)
    return 0


def _cmd_echain(args) -> int:
    c = _resolve_c(args)
    seed = _resolve_seed(args)
    psi = _parse_testfn(args.psi, "--psi")
    _require(args.delta > 0.0, "--delta: must be > 0")
    _require(args.n >= 0, "--n: must be >= 0")
    _require(args.mode in ("exact", "mc"), "--mode: must be exact or mc")
    _resolve_format(args, ("json",), "json")
    try:
        rep = echain_modulus(
            c, psi, args.delta, args.n, mode=args.mode, mc_m=args.m, master_seed=seed
        )
    except (ValueError, DepthExceededError) as exc:
        raise CliError(f"echain: {exc}")
    params = {"c": c, "seed": seed, "psi": psi.descriptor}
    _emit(_json_doc("echain", params, {"report": rep.to_dict()}), args.out)
    return 0


def _cmd_drift(args) -> int:
    c = _resolve_c(args)
    _require(args.grid >= 2, "--grid: must be >= 2")
    _resolve_format(args, ("json",), "json")
    rep = drift_check(c, args.grid)
    _emit(_json_doc("drift", {"c": c, "grid": args.grid}, {"report": rep.to_dict()}), args.out)
    return 0


def _cmd_slln(args) -> int:
    c = _resolve_c(args)
    seed = _resolve_seed(args)
    phi = _parse_testfn(args.phi, "--phi")
    _require(0.0 <= args.x < 1.0, f"--x: must lie in [0, 1), got {args.x:g}")
    _require(args.n >= 1, "--n: must be >= 1")
    _require(args.m >= 1, "--m: must be >= 1")
    _resolve_format(args, ("json",), "json")
    try:
        rep = slln_gap(c, phi, args.x, args.n, args.m, seed)
    except ValueError as exc:
        raise CliError(f"--phi: {exc}")
    _emit(_json_doc("slln", {"c": c}, {"report": rep.to_dict()}), args.out)
    return 0


def _cmd_verify(args) -> int:
    c = _resolve_c(args)
    seed = _resolve_seed(args)
    _resolve_format(args, ("json",), "json")
    suite = acceptance_suite(c, seed, quick=args.quick)
    params = {"c": c, "seed": seed, "quick": args.quick, "generator": GENERATOR_NAME}
    _emit(_json_doc("verify", params, {"suite": suite.to_dict()}), args.out)
    return 0 if suite.overall_passed else 3


def _cmd_plot_maps(args) -> int:
    c = _resolve_c(args)
    _resolve_format(args, ("svg",), "svg")
    _emit(render_maps_svg(c), args.out)
    return 0


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifslab",
        description="Simulation laboratory for the two-map piecewise-linear random iteration",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_seed: bool = True) -> None:
        p.add_argument("--c", type=float, default=0.3, help="slope parameter in (0, 1/2)")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--format", default=None, choices=("csv", "json", "svg"))
        p.add_argument("--force", action="store_true",
                       help="accept c outside [1e-6, 1/2 - 1e-6]")
        p.add_argument("--threads", type=int, default=None,
                       help="reserved concurrency cap; outputs never depend on it")
        if with_seed:
            p.add_argument("--seed", type=int, default=None,
                           help=f"master seed (default {DEFAULT_SEED}; env IFSLAB_SEED)")

    p = sub.add_parser("simulate", help="run trajectories and dump states or aggregates")
    common(p)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=1, help="trajectory count (1: per-step dump)")
    p.add_argument("--phi", default=None, help="optional observable, e.g. tent:0.5")
    p.add_argument("--stream-index", type=int, default=0)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("pushforward", help="exact n-step pushforward of a point mass")
    common(p, with_seed=False)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--merge-tol", type=float, default=1e-13)
    p.set_defaults(fn=_cmd_pushforward)

    p = sub.add_parser("dual", help="exact dual averages of an observable")
    common(p, with_seed=False)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--phi", required=True, help="observable, e.g. tent:0.5")
    p.set_defaults(fn=_cmd_dual)

    p = sub.add_parser("sync", help="sample synchronization thresholds")
    common(p)
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-depth", type=int, default=10_000)
    p.set_defaults(fn=_cmd_sync)

    p = sub.add_parser("echain", help="oscillation modulus of the n-step dual average")
    common(p)
    p.add_argument("--psi", default="ramp:0.5")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--m", type=int, default=100_000, help="streams in mc mode")
    p.add_argument("--mode", default="mc", choices=("exact", "mc"))
    p.set_defaults(fn=_cmd_echain)

    p = sub.add_parser("drift", help="grid check of the contraction inequality")
    common(p, with_seed=False)
    p.add_argument("--grid", type=int, default=10_000)
    p.set_defaults(fn=_cmd_drift)

    p = sub.add_parser("slln", help="time-average gap experiment")
    common(p)
    p.add_argument("--phi", default="tent:0.5")
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--m", type=int, default=1000)
    p.set_defaults(fn=_cmd_slln)

    p = sub.add_parser("verify", help="run the acceptance suite")
    common(p)
    p.add_argument("--quick", action="store_true", help="reduced sizes, doubled MC bands")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("plot-maps", help="render the two maps as SVG")
    common(p, with_seed=False)
    p.set_defaults(fn=_cmd_plot_maps)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags and 0 on --help; pass both through
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
