"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (collected again in the terminal
summary) and then asserts, so a failing criterion fails the suite. Run with
``pytest tests/test_acceptance.py -s`` to see the lines inline.
"""

import os
import time
import warnings

import numpy as np
import pytest

from conftest import record_criterion
from dltpnl.bench import CUMULATIVE_STAGES, run_outlier_experiment, run_prenorm_ablation, run_runtime_bench, trial_rng
from dltpnl.dataset import evaluate_dataset, load_dataset
from dltpnl.errors import InsufficientCorrespondencesError, PnLError, RankDeficiencyWarning
from dltpnl.geometry import homogenize, plucker_from_points, project_line, skew, vec
from dltpnl.metrics import orientation_error, pose_error, reprojection_error
from dltpnl.records import summarize
from dltpnl.solvers import METHODS, estimate_pose, rows_line_line, rows_point_line
from dltpnl.synthetic import SceneConfig, SingularMode, generate_scene

pytestmark = pytest.mark.acceptance

SUCCESS = 2.5  # 10% of the camera distance


def _median(x):
    return float(np.median(x))


# ---------------------------------------------------------------------------


def test_criterion_1_noise_free_exactness():
    t0 = time.perf_counter()
    worst = {m: [0.0, 0.0] for m in METHODS}
    for seed in range(1000):
        sc = generate_scene(SceneConfig(lines=10), trial_rng(1, seed))
        c = sc.correspondences()
        for m in METHODS:
            pose, _ = estimate_pose(c, m)
            worst[m][0] = max(worst[m][0], orientation_error(sc.pose.R, pose.R))
            worst[m][1] = max(worst[m][1], float(np.linalg.norm(pose.T - sc.pose.T)))
    elapsed = time.perf_counter() - t0
    ok = all(a <= 1e-6 and b <= 1e-6 for a, b in worst.values()) and elapsed <= 60
    detail = ", ".join(f"{m} max dTheta {a:.1e} deg dT {b:.1e}" for m, (a, b) in worst.items())
    assert record_criterion(1, ok, f"{detail}; {elapsed:.1f} s")


def test_criterion_2_minimum_correspondences():
    worst, refused = 0.0, 0
    for seed in range(100):
        sc = generate_scene(SceneConfig(lines=5), trial_rng(2, seed))
        c = sc.correspondences()
        assert len(c.points3d) == 10
        pose, _ = estimate_pose(c, "dlt_combined")
        worst = max(worst, orientation_error(sc.pose.R, pose.R), float(np.linalg.norm(pose.T - sc.pose.T)))
        for m in ("dlt_lines", "dlt_plucker"):
            try:
                estimate_pose(c, m)
            except InsufficientCorrespondencesError:
                refused += 1
    ok = worst <= 1e-6 and refused == 200
    assert record_criterion(2, ok, f"combined worst error {worst:.1e} over 100 seeds; {refused}/200 refusals")


def test_criterion_3_kronecker_identities():
    rng = np.random.default_rng(3)
    dev = 0.0
    for _ in range(1000):
        L, l, X = rng.standard_normal(6), rng.standard_normal(3), rng.standard_normal(4)
        P6, P4 = rng.standard_normal((3, 6)), rng.standard_normal((3, 4))
        # independent oracle: numpy's Kronecker product
        dev = max(dev, np.abs(np.kron(L, skew(l)) @ vec(P6) - skew(l) @ P6 @ L).max())
        dev = max(dev, np.abs(np.kron(X, l) @ vec(P4) - l @ P4 @ X).max())
        dev = max(dev, np.abs(rows_line_line(L, l, two_rows=False) - np.kron(L, skew(l))).max())
        dev = max(dev, np.abs(rows_point_line(X, l) - np.kron(X, l)).max())
    assert record_criterion(3, dev <= 1e-12, f"max abs deviation {dev:.1e} over 1000 instances")


def test_criterion_4_accuracy_ordering():
    failures, cells = [], []
    for i, m in enumerate((25, 100, 500)):
        for j, s in enumerate((2.0, 10.0)):
            dT = {k: [] for k in METHODS}
            dpi = {k: [] for k in METHODS}
            for t in range(200):
                sc = generate_scene(SceneConfig(lines=m, sigma=s), trial_rng(4, i, j, t))
                c = sc.correspondences()
                for k in METHODS:
                    try:
                        pose, _ = estimate_pose(c, k)
                    except PnLError:
                        dT[k].append(np.inf)
                        dpi[k].append(np.inf)
                        continue
                    e = pose_error(sc.pose, pose, sc.normalized_segments(), sc.lines3d)
                    dT[k].append(e.position)
                    dpi[k].append(e.reprojection)
            mT = {k: _median(v) for k, v in dT.items()}
            mp = {k: _median(v) for k, v in dpi.items()}
            ok_T = mT["dlt_combined"] <= min(mT["dlt_lines"], mT["dlt_plucker"])
            ok_p = s != 10.0 or mp["dlt_combined"] <= min(mp["dlt_lines"], mp["dlt_plucker"])
            cells.append(f"m={m} s={s:g} dT {mT['dlt_lines']:.3g}/{mT['dlt_plucker']:.3g}/{mT['dlt_combined']:.3g}")
            if not (ok_T and ok_p):
                failures.append(f"m={m} s={s:g}" + ("" if ok_T else " dT") + ("" if ok_p else " dpi"))
    detail = "; ".join(cells) + (f"; violated at {failures}" if failures else "")
    assert record_criterion(4, not failures, "median dT lines/plucker/combined " + detail)


def test_criterion_5_prenorm_ablation():
    rec = run_prenorm_ablation(CUMULATIVE_STAGES, SceneConfig(lines=200, sigma=2.0), trials=200, seed=5, threads=1)
    _, rows = summarize(rec)
    by = {r[0]: r for r in rows}
    # columns: stages, trials, failures, median dTheta/dT/dpi, improvement dTheta/dT/dpi
    imp_ii = by["i,ii"][7]
    later = [by["i,ii,iii"][6], by["i,ii,iii"][7], by["i,ii,iii,iv"][6], by["i,ii,iii,iv"][7]]
    ok = imp_ii >= 95.0 and all(abs(x) < 10.0 for x in later)
    medians = ", ".join(f"{r[0]}: {r[4]:.3g}" for r in rows)
    detail = (f"(i)+(ii) over (i) improves median dT by {imp_ii:.1f}% (need >= 95%); "
              f"(iii),(iv) changes {', '.join(f'{x:.1f}%' for x in later)} (need < 10%); median dT {medians}")
    assert record_criterion(5, ok, detail)


def test_criterion_6_reprojection_quadrature():
    rng = np.random.default_rng(6)
    samples = 2000
    t = (np.arange(samples) + 0.5) / samples
    worst = 0.0
    for _ in range(10):
        sc = generate_scene(SceneConfig(lines=1000), rng)
        seg = sc.normalized_segments() + rng.normal(0, 0.02, (1000, 2, 2))
        L = sc.lines3d
        l = project_line(sc.pose, L)
        l = l / np.linalg.norm(l[:, :2], axis=1, keepdims=True)
        pts = seg[:, None, 0] + t[None, :, None] * (seg[:, None, 1] - seg[:, None, 0])
        d = np.einsum("nsk,nk->ns", homogenize(pts), l)
        expected = np.mean(d * d, axis=1)
        for k in range(1000):
            got = reprojection_error(sc.pose, seg[k:k + 1], L[k:k + 1])
            worst = max(worst, abs(got - expected[k]) / expected[k])
    assert record_criterion(6, worst <= 1e-6, f"max relative deviation {worst:.1e} over 10000 pairs")


def test_criterion_7_aor_breakdown():
    fr = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.55]
    base = SceneConfig(lines=500, sigma=2.0)
    rec = run_outlier_experiment(["dlt_combined"], fr, base, trials=100, seed=7, threads=1)
    _, rows = summarize(rec)
    rate = {r[1]: r[3] for r in rows}
    runtime = {r[1]: r[7] for r in rows}
    rec_l = run_outlier_experiment(["dlt_lines"], [0.65], base, trials=100, seed=7, threads=1)
    _, rows_l = summarize(rec_l)
    rate_l = rows_l[0][3]
    rt = [runtime[f] for f in fr if f <= 0.5]
    spread = max(rt) / min(rt)
    ok = min(rate.values()) >= 0.95 and spread < 2.0 and rate_l >= 0.95
    detail = (f"combined success {', '.join(f'{f:g}:{rate[f]:.2f}' for f in fr)}; "
              f"runtime max/min over 0-0.5 {spread:.2f}; dlt_lines success at 0.65 {rate_l:.2f}")
    assert record_criterion(7, ok, detail)


def test_criterion_8_runtime_scaling():
    rec = run_runtime_bench(list(METHODS), [100, 1000], trials=20, seed=8, warmup=3)
    _, rows = summarize(rec)
    mean = {(r[0], r[1]): r[3] for r in rows}
    ratios = {m: mean[(m, 1000)] / mean[(m, 100)] for m in METHODS}
    ok = all(r <= 15 for r in ratios.values()) and mean[("dlt_combined", 1000)] <= 100
    detail = ", ".join(f"{m} {mean[(m, 100)]:.2f} -> {mean[(m, 1000)]:.2f} ms (x{ratios[m]:.1f})" for m in METHODS)
    assert record_criterion(8, ok, detail)


def _quasi_singular(mode, trials=100, seed=9):
    """Per method: position errors (inf on exceptions) and warn-or-fail flags."""
    cfg = SceneConfig(lines=200, sigma=2.0, singular=mode)
    dT = {m: [] for m in METHODS}
    bad = {m: [] for m in METHODS}
    for t in range(trials):
        sc = generate_scene(cfg, trial_rng(seed, t))
        c = sc.correspondences()
        for m in METHODS:
            with warnings.catch_warnings(record=True) as w:
                warnings.simplefilter("always")
                try:
                    pose, _ = estimate_pose(c, m)
                    e = float(np.linalg.norm(pose.T - sc.pose.T))
                except PnLError:
                    e = np.inf
            warned = any(issubclass(x.category, RankDeficiencyWarning) for x in w)
            dT[m].append(e)
            bad[m].append(warned or not e < SUCCESS)
    return dT, bad


def test_criterion_9_quasi_singular():
    results = []
    base, _ = _quasi_singular(SingularMode())
    base_med = {m: _median(v) for m, v in base.items()}

    dT, bad = _quasi_singular(SingularMode("directions", count=2))
    s_lines = np.mean(np.array(dT["dlt_lines"]) < SUCCESS)
    fw = {m: np.mean(bad[m]) for m in ("dlt_plucker", "dlt_combined")}
    results.append((s_lines >= 0.95 and min(fw.values()) >= 0.95,
                    f"2 directions: dlt_lines success {s_lines:.2f}, plucker/combined fail-or-warn "
                    f"{fw['dlt_plucker']:.2f}/{fw['dlt_combined']:.2f}"))

    dT, _ = _quasi_singular(SingularMode("directions", count=3, orthogonal=True))
    s = {m: np.mean(np.array(dT[m]) < SUCCESS) for m in ("dlt_plucker", "dlt_combined")}
    results.append((min(s.values()) >= 0.95,
                    f"3 orthogonal directions: plucker/combined success {s['dlt_plucker']:.2f}/{s['dlt_combined']:.2f}"))

    dT, _ = _quasi_singular(SingularMode("flatten", ratio=0.01))
    r = {m: _median(dT[m]) / base_med[m] for m in METHODS}
    results.append((min(r.values()) >= 2.0,
                    "flatten 1:100: median dT / baseline " + "/".join(f"{x:.1f}" for x in r.values())))

    # 197 of 200 lines through one point, 3 non-concurrent
    dT, _ = _quasi_singular(SingularMode("concurrent", fraction=0.985))
    s = {m: np.mean(np.array(dT[m]) < SUCCESS) for m in METHODS}
    r = {m: _median(dT[m]) / base_med[m] for m in METHODS}
    ok = all(s[m] >= 0.95 and r[m] <= 2.0 for m in METHODS)
    results.append((ok, "3 non-concurrent lines: success " + "/".join(f"{x:.2f}" for x in s.values())
                    + ", median dT / baseline " + "/".join(f"{x:.1f}" for x in r.values())))

    ok = all(o for o, _ in results)
    detail = "; ".join(f"[{'ok' if o else 'x'}] {d}" for o, d in results)
    assert record_criterion(9, ok, detail)


def test_criterion_10_model_house():
    path = os.environ.get("PNL_MODEL_HOUSE")
    if not path:
        record_criterion(10, None, "optional; set PNL_MODEL_HOUSE to a Model House file in the canonical format")
        pytest.skip("PNL_MODEL_HOUSE not set")
    ev = evaluate_dataset(load_dataset(path), ["dlt_combined"])
    e = ev.mean_errors("dlt_combined")
    ok = e is not None and e.orientation_deg <= 3 * 0.41
    got = "no evaluated images" if e is None else f"{e.orientation_deg:.3f} deg"
    assert record_criterion(10, ok, f"combined mean dTheta {got} (need <= 1.23 deg)")
