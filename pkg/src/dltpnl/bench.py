"""Monte-Carlo experiments on synthetic scenes.

Every trial draws its scene from its own random stream, derived from the
master seed and the trial's grid coordinates, so results do not depend on
execution order or on the number of worker threads (``PNL_THREADS``).
Solver failures are recorded as data rather than dropped.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from .aor import AorConfig, aor_estimate
from .errors import PnLError
from .metrics import pose_error
from .records import RecordFile
from .solvers import SolverConfig, canonical_method, estimate_pose
from .synthetic import SceneConfig, generate_scene

CUMULATIVE_STAGES = ((), ("i",), ("i", "ii"), ("i", "ii", "iii"), ("i", "ii", "iii", "iv"),
                     ("i", "ii", "iii", "iv", "v"))

_NAN3 = (float("nan"),) * 3


def thread_count():
    """Worker threads from ``PNL_THREADS`` (default: all cores)."""
    raw = os.environ.get("PNL_THREADS", "")
    if raw.strip():
        n = int(raw)
        if n < 1:
            raise ValueError("PNL_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def trial_rng(seed, *coords):
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(c) for c in coords]))


def _map(fn, items, threads=None):
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def stages_label(stages):
    return ",".join(stages) if stages else "none"


def _config_dict(scene_config, **extra):
    d = asdict(scene_config)
    d["singular"] = str(scene_config.singular)
    d["intrinsics"] = {"focal": scene_config.intrinsics.focal,
                       "principal_point": list(scene_config.intrinsics.principal_point),
                       "image_size": list(scene_config.intrinsics.image_size)}
    d.pop("seed", None)
    d.update(extra)
    return d


def _solver_dict(cfg):
    d = asdict(cfg)
    d["prenorm"] = list(cfg.prenorm)
    return d


def _evaluate(scene, method, solver_config, robust=None):
    """Run one solver on one scene; returns (errors, runtime_ms, status, extra)."""
    corrs = scene.correspondences()
    t0 = time.perf_counter()
    try:
        if robust is not None:
            pose, rep = aor_estimate(corrs, method, robust, solver_config)
            extra = rep
        else:
            pose, _ = estimate_pose(corrs, method, solver_config)
            extra = None
    except PnLError as exc:
        return _NAN3, (time.perf_counter() - t0) * 1e3, type(exc).__name__, None
    dt = (time.perf_counter() - t0) * 1e3
    err = pose_error(scene.pose, pose, scene.normalized_segments(), scene.lines3d)
    return err.as_tuple(), dt, "ok", extra


def run_monte_carlo(methods, lines=(100,), sigmas=(2.0,), trials=100, seed=0,
                    scene_config=None, solver_config=None, timing=True, threads=None):
    """Accuracy grid over ``lines`` x ``sigmas``; one record per (method, cell, trial).

    All methods see the same scene in a given trial. With ``timing=False`` the
    runtime column is omitted, which makes the output a pure function of the
    seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    methods = [canonical_method(m) for m in methods]
    base = scene_config or SceneConfig()
    solver_config = solver_config or SolverConfig()
    jobs = [(i, m, j, s, t) for i, m in enumerate(lines) for j, s in enumerate(sigmas) for t in range(trials)]

    def one(job):
        i, m, j, s, t = job
        cfg = base.with_(lines=int(m), sigma=float(s))
        rows = []
        try:
            scene = generate_scene(cfg, trial_rng(seed, i, j, t))
        except PnLError as exc:
            return [(meth, int(m), float(s), t, *_NAN3, float("nan"), type(exc).__name__) for meth in methods]
        for meth in methods:
            err, dt, status, _ = _evaluate(scene, meth, solver_config)
            rows.append((meth, int(m), float(s), t, *err, dt, status))
        return rows

    rows = [r for chunk in _map(one, jobs, threads) for r in chunk]
    cols = ["method", "lines", "sigma", "trial", "orientation_deg", "position", "reprojection",
            "runtime_ms", "status"]
    if not timing:
        cols.remove("runtime_ms")
        rows = [r[:7] + r[8:] for r in rows]
    config = {"scene": _config_dict(base), "solver": _solver_dict(solver_config), "seed": seed,
              "methods": methods, "lines": [int(m) for m in lines], "sigmas": [float(s) for s in sigmas],
              "trials": trials, "timing": timing}
    return RecordFile("monte-carlo", cols, rows, config)


def run_prenorm_ablation(stage_sets=CUMULATIVE_STAGES, scene_config=None, trials=200, seed=0,
                         solver_config=None, threads=None, method="dlt_combined"):
    """Median errors of ``method`` with each stage set active (cumulative by default)."""
    base = scene_config or SceneConfig(lines=200, sigma=2.0)
    solver_config = solver_config or SolverConfig()
    stage_sets = [tuple(s) for s in stage_sets]

    def one(t):
        scene = generate_scene(base, trial_rng(seed, t))
        out = []
        for st in stage_sets:
            cfg = SolverConfig(**{**asdict(solver_config), "prenorm": st})
            err, _, status, _ = _evaluate(scene, method, cfg)
            out.append((stages_label(st), t, *err, status))
        return out

    rows = [r for chunk in _map(one, list(range(trials)), threads) for r in chunk]
    cols = ["stages", "trial", "orientation_deg", "position", "reprojection", "status"]
    config = {"scene": _config_dict(base), "solver": _solver_dict(solver_config), "seed": seed,
              "method": canonical_method(method), "trials": trials,
              "stage_sets": [stages_label(s) for s in stage_sets]}
    return RecordFile("ablation", cols, rows, config)


def run_outlier_experiment(methods, fractions=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8),
                           scene_config=None, trials=100, seed=0, aor_config=None,
                           solver_config=None, threads=None):
    """Break-down curves of the AOR-wrapped solvers.

    A trial succeeds when the position error is below 10% of the camera
    distance; solver errors count as failures.
    """
    methods = [canonical_method(m) for m in methods]
    base = scene_config or SceneConfig(lines=500, sigma=2.0)
    aor_config = aor_config or AorConfig()
    solver_config = solver_config or SolverConfig()
    for f in fractions:
        if not 0.0 <= f <= 0.8:
            raise ValueError("outlier fractions must lie in [0, 0.8]")
    limit = 0.1 * base.camera_distance
    jobs = [(i, f, t) for i, f in enumerate(fractions) for t in range(trials)]

    def one(job):
        i, f, t = job
        scene = generate_scene(base.with_(outlier_fraction=float(f)), trial_rng(seed, i, t))
        out = []
        for meth in methods:
            err, dt, status, rep = _evaluate(scene, meth, solver_config, aor_config)
            ok = status == "ok" and err[1] < limit
            iters = rep.iterations if rep is not None else -1
            inl = rep.inlier_fraction if rep is not None else float("nan")
            out.append((meth, float(f), t, *err, dt, iters, inl, ok, status))
        return out

    rows = [r for chunk in _map(one, jobs, threads) for r in chunk]
    cols = ["method", "fraction", "trial", "orientation_deg", "position", "reprojection",
            "runtime_ms", "iterations", "inlier_fraction", "success", "status"]
    config = {"scene": _config_dict(base), "solver": _solver_dict(solver_config), "seed": seed,
              "aor": asdict(aor_config), "methods": methods, "fractions": [float(f) for f in fractions],
              "trials": trials, "success_threshold": limit}
    return RecordFile("outliers", cols, rows, config)


def run_runtime_bench(methods, lines=(10, 100, 1000), trials=20, seed=0, warmup=3,
                      scene_config=None, solver_config=None):
    """Wall-clock time of the full pipeline (prenormalize, build, solve, extract).

    Runs sequentially; ``warmup`` untimed calls precede each (method, m) cell.
    """
    methods = [canonical_method(m) for m in methods]
    base = scene_config or SceneConfig(sigma=1.0)
    solver_config = solver_config or SolverConfig()
    rows = []
    for i, m in enumerate(lines):
        scenes = [generate_scene(base.with_(lines=int(m)), trial_rng(seed, i, t)) for t in range(trials)]
        corrs = [s.correspondences() for s in scenes]
        for meth in methods:
            for w in range(warmup):
                estimate_pose(corrs[w % len(corrs)], meth, solver_config)
            for t, c in enumerate(corrs):
                t0 = time.perf_counter()
                estimate_pose(c, meth, solver_config)
                rows.append((meth, int(m), t, (time.perf_counter() - t0) * 1e3))
    cols = ["method", "lines", "trial", "runtime_ms"]
    config = {"scene": _config_dict(base), "solver": _solver_dict(solver_config), "seed": seed,
              "methods": methods, "lines": [int(m) for m in lines], "trials": trials, "warmup": warmup}
    return RecordFile("runtime", cols, rows, config)
