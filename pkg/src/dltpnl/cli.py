"""Command-line interface: ``dltpnl <subcommand> ...``.

Exit codes: 0 success, 2 invalid input (flags, unreadable or malformed
files), 3 estimation failed on every image.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .aor import AorConfig
from .bench import (
    CUMULATIVE_STAGES,
    run_monte_carlo,
    run_outlier_experiment,
    run_prenorm_ablation,
    run_runtime_bench,
    stages_label,
    thread_count,
)
from .dataset import evaluate_dataset, load_dataset
from .errors import DatasetError
from .geometry import CameraIntrinsics
from .records import RecordFile, dumps, read_records, render
from .solvers import METHODS, SolverConfig, canonical_method
from .synthetic import SceneConfig, SingularMode

EXIT_OK, EXIT_INVALID, EXIT_ALL_FAILED = 0, 2, 3


class UsageError(Exception):
    pass


def _list(conv, name):
    def parse(text):
        try:
            vals = [conv(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {name} list {text!r}") from None
        if not vals:
            raise argparse.ArgumentTypeError(f"empty {name} list")
        return vals

    return parse


def _methods(text):
    try:
        return [canonical_method(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _singular(text):
    try:
        return SingularMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _stages(text):
    out = []
    for group in text.split(";"):
        group = group.strip()
        if group in ("", "none"):
            out.append(())
            continue
        st = tuple(s.strip() for s in group.split(","))
        if any(s not in ("i", "ii", "iii", "iv", "v") for s in st):
            raise argparse.ArgumentTypeError(f"invalid stage set {group!r}")
        out.append(st)
    return out


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _emit(text, out):
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _output(rec, args):
    text = dumps(rec) if args.format == "records" else render(rec, args.format)
    _emit(text, args.out)


def _scene_config(args, **overrides):
    intr = CameraIntrinsics(focal=args.focal)
    kw = dict(cube_side=args.cube_side, camera_distance=args.camera_distance, intrinsics=intr)
    kw.update(overrides)
    return SceneConfig(**kw)


def _solver_config(args):
    kw = {"k": args.k}
    if getattr(args, "block_weighting", None):
        kw["block_weighting"] = args.block_weighting
    return SolverConfig(**kw)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_estimate(args):
    try:
        ds = load_dataset(args.dataset)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    ev = evaluate_dataset(ds, args.method, aor=args.aor, solver_config=_solver_config(args))
    cols = ["image", "method", "status", "reason"] + [f"R{i}{j}" for i in range(3) for j in range(3)]
    cols += ["T0", "T1", "T2", "orientation_deg", "position", "reprojection"]
    nan = float("nan")
    rows = []
    for r in ev.results:
        pose = [nan] * 12 if r.pose is None else list(r.pose.R.ravel()) + list(r.pose.T)
        err = [nan] * 3 if r.error is None else list(r.error.as_tuple())
        reason = " ".join(r.reason.split()) or "-"
        rows.append((r.image, r.method, r.status, reason, *pose, *err))
        if r.status != "ok":
            print(f"{r.image} [{r.method}] {r.status}: {r.reason}", file=sys.stderr)
    config = {"dataset": str(args.dataset), "name": ds.name, "methods": args.method, "aor": args.aor,
              "solver": {"k": args.k, "block_weighting": args.block_weighting}}
    rec = RecordFile("estimate", cols, rows, config)
    _output(rec, args)
    if not any(r.status == "ok" for r in ev.results):
        print("error: estimation failed or was skipped on every image", file=sys.stderr)
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_synth(args):
    cfg = _scene_config(args, singular=args.singular_mode)
    rec = run_monte_carlo(args.methods, args.lines, args.sigma, args.trials, args.seed, cfg,
                          _solver_config(args), timing=args.timing)
    _output(rec, args)
    return EXIT_OK


def cmd_bench(args):
    rec = run_runtime_bench(args.methods, args.lines, args.trials, args.seed, args.warmup,
                            _scene_config(args, sigma=args.sigma), _solver_config(args))
    _output(rec, args)
    return EXIT_OK


def cmd_ablate(args):
    cfg = _scene_config(args, lines=args.lines, sigma=args.sigma)
    rec = run_prenorm_ablation(args.stages, cfg, args.trials, args.seed, _solver_config(args), method=args.method)
    _output(rec, args)
    return EXIT_OK


def cmd_outliers(args):
    cfg = _scene_config(args, lines=args.lines, sigma=args.sigma, outlier_sigma=args.outlier_sigma)
    rec = run_outlier_experiment(args.methods, args.fractions, cfg, args.trials, args.seed,
                                 AorConfig(), _solver_config(args))
    _output(rec, args)
    return EXIT_OK


def cmd_report(args):
    try:
        rec = read_records(args.records)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read record file {args.records}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(render(rec, args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="dltpnl", description="Camera pose from line correspondences (DLT).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True, fmt=True):
        sp.add_argument("--out", required=out_required, default="-",
                        help="output path ('-' for standard output)")
        if fmt:
            sp.add_argument("--format", choices=("records", "text", "csv"), default="records",
                            help="raw record file (default) or a summary table")
        sp.add_argument("--k", type=float, default=0.7, help="combined-method blend factor")
        sp.add_argument("--block-weighting", choices=("residual", "frobenius"), default="residual")

    def scene(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--cube-side", type=float, default=10.0)
        sp.add_argument("--camera-distance", type=float, default=25.0)
        sp.add_argument("--focal", type=float, default=800.0)

    all_methods = ",".join(METHODS)

    sp = sub.add_parser("estimate", help="estimate poses for every image of a dataset file")
    sp.add_argument("dataset")
    sp.add_argument("--method", type=_methods, default=["dlt_combined"], help="comma-separated methods")
    sp.add_argument("--aor", action="store_true", help="wrap the solver in algebraic outlier rejection")
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("synth", help="Monte-Carlo accuracy grid on synthetic lines")
    sp.add_argument("--lines", type=_list(int, "line count"), default=[25, 100, 500])
    sp.add_argument("--sigma", type=_list(float, "sigma"), default=[2.0])
    sp.add_argument("--trials", type=_positive_int, default=100)
    sp.add_argument("--methods", type=_methods, default=list(METHODS))
    sp.add_argument("--singular-mode", type=_singular, default=SingularMode(),
                    help="none | directions:K[:orthogonal] | flatten:R | concurrent:F")
    sp.add_argument("--timing", action="store_true",
                    help="record per-trial runtimes (output is then not byte-reproducible)")
    scene(sp)
    common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("bench", help="runtime per method and line count")
    sp.add_argument("--lines", type=_list(int, "line count"), default=[10, 100, 1000])
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--trials", type=_positive_int, default=20)
    sp.add_argument("--warmup", type=int, default=3)
    sp.add_argument("--methods", type=_methods, default=list(METHODS))
    scene(sp)
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ablate", help="effect of the combined prenormalization stages")
    sp.add_argument("--lines", type=int, default=200)
    sp.add_argument("--sigma", type=float, default=2.0)
    sp.add_argument("--trials", type=_positive_int, default=200)
    sp.add_argument("--method", type=lambda t: _methods(t)[0], default="dlt_combined")
    sp.add_argument("--stages", type=_stages, default=list(CUMULATIVE_STAGES),
                    help="';'-separated stage sets, e.g. 'none;i;i,ii' (default: cumulative)")
    scene(sp)
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("outliers", help="break-down of the solvers with outlier rejection")
    sp.add_argument("--fractions", type=_list(float, "fraction"),
                    default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8])
    sp.add_argument("--lines", type=int, default=500)
    sp.add_argument("--sigma", type=float, default=2.0)
    sp.add_argument("--outlier-sigma", type=float, default=100.0)
    sp.add_argument("--trials", type=_positive_int, default=100)
    sp.add_argument("--methods", type=_methods, default=list(METHODS))
    scene(sp)
    common(sp)
    sp.set_defaults(func=cmd_outliers)

    sp = sub.add_parser("report", help="render a record file as a summary table")
    sp.add_argument("records")
    sp.add_argument("--format", choices=("text", "csv"), default="text")
    sp.add_argument("--out", default="-", help="output path ('-' for standard output)")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_count()
        if hasattr(args, "fractions") and any(not 0.0 <= f <= 0.8 for f in args.fractions):
            raise UsageError("outlier fractions must lie in [0, 0.8]")
        if hasattr(args, "k") and not 0.0 <= args.k <= 1.0:
            raise UsageError("--k must lie in [0, 1]")
        return args.func(args)
    except (UsageError, ValueError) as exc:
        # flag values rejected by the configuration objects
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
