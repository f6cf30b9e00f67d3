import warnings

import numpy as np
import pytest

from conftest import random_pose, random_rotation
from dltpnl.errors import (
    DegenerateInputError,
    GeodesicAmbiguityError,
    InsufficientCorrespondencesError,
    RankDeficiencyWarning,
)
from dltpnl.geometry import (
    Pose,
    combined_projection_matrix,
    homogenize,
    line_projection_matrix,
    point_projection_matrix,
    rotation_about,
    skew,
    vec,
)
from dltpnl.metrics import orientation_error
from dltpnl.solvers import (
    CorrespondenceSet,
    SolverConfig,
    build_measurement,
    canonical_method,
    correct_scale,
    decompose_essential,
    estimate_pose,
    extract_pose_combined,
    extract_pose_dlt_lines,
    interpolate_rotation,
    nearest_rotation,
    rows_line_line,
    rows_point_line,
    rows_point_point,
    solve_homogeneous,
)
from dltpnl.synthetic import SceneConfig, generate_scene

METHODS = ("dlt_lines", "dlt_plucker", "dlt_combined")


def scene(rng, lines=10, sigma=0.0, **kw):
    return generate_scene(SceneConfig(lines=lines, sigma=sigma, **kw), rng)


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------


def test_point_line_row_expansion():
    np.testing.assert_array_equal(rows_point_line([1, 2, 3, 1], [0, 0, 1]), [0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0, 1])
    row = rows_point_line([0, 0, 0, 1], [0, 0, 1])
    assert row[11] == 1 and np.count_nonzero(row) == 1


def test_point_line_row_residual(rng):
    pose = random_pose(rng)
    X = homogenize(rng.standard_normal(3))
    x = point_projection_matrix(pose) @ X
    l = np.cross(x, rng.standard_normal(3))
    assert abs(rows_point_line(X, l) @ vec(point_projection_matrix(pose))) <= 1e-9 * np.linalg.norm(l) * 30


def test_line_line_rows_block_position():
    l = np.array([0, 1, 0.0])
    R = rows_line_line([0, 0, 0, 1, 0, 0], l, two_rows=False)
    np.testing.assert_array_equal(R[:, 9:12], skew(l))
    assert np.count_nonzero(R[:, :9]) == 0 and np.count_nonzero(R[:, 12:]) == 0


def test_line_line_rows_zero_line():
    assert not np.any(rows_line_line(np.ones(6), np.zeros(3), two_rows=False))


def test_line_line_rows_residual(rng):
    sc = scene(rng)
    P = vec(line_projection_matrix(sc.pose))
    for L, l in zip(sc.lines3d, sc.correspondences().lines2d):
        R = rows_line_line(L, l)
        assert R.shape == (2, 18)
        assert np.abs(R @ P).max() <= 1e-9 * np.abs(R).max() * np.abs(P).max() * 30


def test_point_point_rows():
    R = rows_point_point([0, 0, 0, 1], [0, 0, 1], two_rows=False)
    assert not np.any(R @ vec(np.hstack([np.eye(3), np.zeros((3, 1))])))


def test_point_point_rows_match_point_line(rng):
    X = homogenize(rng.standard_normal(3))
    x = rng.standard_normal(3)
    R = rows_point_point(X, x, two_rows=False)
    for i, line in enumerate(skew(x)):
        np.testing.assert_allclose(R[i], rows_point_line(X, line), atol=1e-15)


def test_point_point_residual(rng):
    pose = random_pose(rng)
    X = homogenize(rng.standard_normal(3) * 5)
    x = point_projection_matrix(pose) @ X
    R = rows_point_point(X, x)
    assert np.abs(R @ vec(point_projection_matrix(pose))).max() <= 1e-9 * np.linalg.norm(x) * 30


def test_residual_identity_all_builders(rng):
    sc = scene(rng, lines=30)
    c = sc.correspondences()
    for target, P in (("point12", point_projection_matrix(sc.pose)),
                      ("line18", line_projection_matrix(sc.pose)),
                      ("combined21", combined_projection_matrix(sc.pose))):
        M = build_measurement(c, target, balance=False).M
        p = vec(P)
        assert np.linalg.norm(M @ p) <= 1e-9 * np.linalg.norm(M) * np.linalg.norm(p)


def test_combined_projection_invariants(rng):
    pose = random_pose(rng)
    P = combined_projection_matrix(pose) * 3.7
    P1, P2, P3 = P[:, :3], P[:, 3], P[:, 4:]
    G = P1.T @ P1
    np.testing.assert_allclose(G, G[0, 0] * np.eye(3), atol=1e-10 * G[0, 0])
    S = P1.T @ P3
    np.testing.assert_allclose(S, -S.T, atol=1e-10 * np.abs(S).max())
    np.testing.assert_allclose(P2, -P1 @ pose.T, atol=1e-10 * np.abs(P2).max())


# ---------------------------------------------------------------------------
# Minimum counts
# ---------------------------------------------------------------------------


def partial(c, n_points, m_lines):
    return CorrespondenceSet(c.points3d[:n_points], c.point_lines2d[:n_points], c.lines3d[:m_lines],
                             c.lines2d[:m_lines], point_group=c.point_group[:n_points],
                             line_group=c.line_group[:m_lines])


def test_combined_minimum_boundaries(rng):
    c = scene(rng, lines=10).correspondences()
    build_measurement(partial(c, 3, 9), "combined21")
    build_measurement(partial(c, 10, 5), "combined21")
    with pytest.raises(InsufficientCorrespondencesError):
        build_measurement(partial(c, 9, 5), "combined21")
    with pytest.raises(InsufficientCorrespondencesError):
        build_measurement(partial(c, 20, 4), "combined21")


def test_other_minimums(rng):
    c = scene(rng, lines=10).correspondences()
    with pytest.raises(InsufficientCorrespondencesError):
        build_measurement(partial(c, 10, 5), "point12")
    with pytest.raises(InsufficientCorrespondencesError):
        build_measurement(partial(c, 0, 8), "line18")
    build_measurement(partial(c, 12, 9), "point12")
    build_measurement(partial(c, 0, 9), "line18")


# ---------------------------------------------------------------------------
# Solving and extraction
# ---------------------------------------------------------------------------


def test_solve_known_nullspace(rng):
    v = rng.standard_normal(6)
    A = rng.standard_normal((20, 6))
    A -= np.outer(A @ v, v) / (v @ v)
    p, sv = solve_homogeneous(A)
    np.testing.assert_allclose(abs(p @ v) / np.linalg.norm(v), 1.0, atol=1e-12)
    assert np.linalg.norm(p) == pytest.approx(1.0)


def test_solve_duplicated_rows(rng):
    A = rng.standard_normal((20, 6))
    p1, _ = solve_homogeneous(A)
    p2, _ = solve_homogeneous(np.vstack([A, A]))
    assert abs(p1 @ p2) == pytest.approx(1.0, abs=1e-12)


def test_solve_rank_deficiency_warning(rng):
    A = np.hstack([rng.standard_normal((10, 4)), np.zeros((10, 2))])
    with pytest.warns(RankDeficiencyWarning):
        solve_homogeneous(A)


def test_solve_rejects_degenerate():
    with pytest.raises(DegenerateInputError):
        solve_homogeneous(np.zeros((10, 4)))
    with pytest.raises(InsufficientCorrespondencesError):
        solve_homogeneous(np.ones((2, 12)))


def test_noise_free_residual(rng):
    c = scene(rng, lines=20).correspondences()
    _, diag = estimate_pose(c, "dlt_combined")
    assert diag.residual <= 1e-9
    assert set(diag.timings) == {"prenorm", "build", "solve", "extract", "total"}
    assert diag.singular_gap > 0


def test_correct_scale():
    R = rotation_about([1, 1, 0], 0.4)
    _, s = correct_scale(np.hstack([0.5 * R, np.ones((3, 1))]))
    assert s == pytest.approx(2.0)
    _, s = correct_scale(np.diag([2.0, 1, 1]))
    assert s == pytest.approx(0.75)


def test_correct_scale_random(rng):
    P = rng.standard_normal((3, 7))
    sP, _ = correct_scale(P)
    assert np.linalg.svd(sP[:, :3], compute_uv=False).mean() == pytest.approx(1.0, abs=1e-12)


def test_nearest_rotation_simple(rng):
    np.testing.assert_allclose(nearest_rotation(np.eye(3)), np.eye(3))
    R = random_rotation(rng)
    np.testing.assert_allclose(nearest_rotation(2 * R), R, atol=1e-12)


def test_nearest_rotation_sampling_oracle(rng):
    A = rng.standard_normal((3, 3))
    if np.linalg.det(A) < 0:
        A = -A
    best = np.linalg.norm(nearest_rotation(A) - A)
    samples = [random_rotation(rng) for _ in range(10_000)]
    assert all(best <= np.linalg.norm(S - A) + 1e-12 for S in samples)


def test_decompose_essential_axis():
    T = np.array([1.0, 0, 0])
    refs = np.array([[1.0, 0, -5], [2.0, 1, -4], [0.0, -1, -6]])
    R, T_out = decompose_essential(skew(-T), 1.0, refs)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(T_out, T, atol=1e-12)


def test_decompose_essential_random(rng):
    for _ in range(20):
        sc = scene(rng)
        R, T = sc.pose.R, sc.pose.T
        E = R @ skew(-T)
        _, s = correct_scale(np.hstack([3.0 * R, 3.0 * E]))
        R_out, T_out = decompose_essential(3.0 * E, s, sc.segments3d.reshape(-1, 3))
        np.testing.assert_allclose(R_out, R, atol=1e-9)
        np.testing.assert_allclose(T_out, T, atol=1e-9 * np.linalg.norm(T))


def test_decompose_essential_zero():
    with pytest.raises(DegenerateInputError):
        decompose_essential(np.zeros((3, 3)))


def test_extract_dlt_lines_exact_and_scaled(rng):
    pose = random_pose(rng)
    P = point_projection_matrix(pose)
    for scale in (1.0, 5.0, -2.0):
        out = extract_pose_dlt_lines(scale * P)
        np.testing.assert_allclose(out.R, pose.R, atol=1e-12)
        np.testing.assert_allclose(out.T, pose.T, atol=1e-12 * np.linalg.norm(pose.T))


def test_extract_combined_exact_any_k(rng):
    sc = scene(rng)
    P = combined_projection_matrix(sc.pose)
    refs = sc.segments3d.reshape(-1, 3)
    for k in (0.0, 0.3, 0.7, 1.0):
        pose, parts = extract_pose_combined(P, SolverConfig(k=k), refs, parts=True)
        for R in (parts["R1"], parts["R3"], pose.R):
            np.testing.assert_allclose(R, sc.pose.R, atol=1e-9)
        for T in (parts["T2"], parts["T3"], pose.T):
            np.testing.assert_allclose(T, sc.pose.T, atol=1e-9)


def test_extract_combined_endpoints(rng):
    sc = scene(rng)
    P = combined_projection_matrix(sc.pose).copy()
    P[:, 3] += rng.standard_normal(3)  # disturb T2 only
    P[:, 4:] = P[:, 4:] @ rotation_about([0, 0, 1], 0.05)
    refs = sc.segments3d.reshape(-1, 3)
    _, parts = extract_pose_combined(P, SolverConfig(), refs, parts=True)
    one = extract_pose_combined(P, SolverConfig(k=1.0), refs)
    zero = extract_pose_combined(P, SolverConfig(k=0.0), refs)
    np.testing.assert_allclose(one.R, parts["R1"], atol=1e-12)
    np.testing.assert_allclose(one.T, parts["T2"], atol=1e-12)
    np.testing.assert_allclose(zero.R, parts["R3"], atol=1e-12)
    np.testing.assert_allclose(zero.T, parts["T3"], atol=1e-12)


def test_interpolation_axis_angle_example():
    R3 = rotation_about([0, 0, 1], np.radians(10))
    R = interpolate_rotation(np.eye(3), R3, 1 - 0.7)
    np.testing.assert_allclose(R, rotation_about([0, 0, 1], np.radians(3)), atol=1e-12)


def test_interpolation_half_turn_rejected():
    with pytest.raises(GeodesicAmbiguityError):
        interpolate_rotation(np.eye(3), rotation_about([1, 0, 0], np.pi), 0.5)


def test_combined_k_weights_left_block(rng):
    # with R1 = I and R3 = rot(z, 10 deg), output is 3 deg from R1 at k = 0.7
    R3 = rotation_about([0, 0, 1], np.radians(10))
    R = interpolate_rotation(np.eye(3), R3, 0.3)
    assert orientation_error(np.eye(3), R) == pytest.approx(3.0, abs=1e-9)
    assert orientation_error(R, R3) == pytest.approx(7.0, abs=1e-9)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("method", METHODS)
def test_noise_free_recovery(method):
    for seed in range(20):
        sc = scene(np.random.default_rng(seed))
        pose, _ = estimate_pose(sc.correspondences(), method)
        assert orientation_error(sc.pose.R, pose.R) <= 1e-6
        assert np.linalg.norm(pose.T - sc.pose.T) <= 1e-6


def test_five_lines_only_combined(rng):
    c = scene(rng, lines=5).correspondences()
    estimate_pose(c, "dlt_combined")
    for method in ("dlt_lines", "dlt_plucker"):
        with pytest.raises(InsufficientCorrespondencesError):
            estimate_pose(c, method)


def _two_line_scene():
    # every segment lies on one of two 3D lines
    pose = Pose.look_at([0, 0, 25.0], roll=0.3)
    t = np.linspace(-4, 4, 11)
    a = lambda s: np.column_stack([s + 1, 0.5 * s + 2, 0.3 * s + 1])
    b = lambda s: np.column_stack([-0.2 * s - 1, s + 0.5, -0.4 * s + 2])
    E = np.concatenate([np.stack([f(t[:-1]), f(t[1:])], axis=1) for f in (a, b)])
    Xc = pose.to_camera(E)
    return CorrespondenceSet.from_segments(E, Xc[..., :2] / Xc[..., 2:])


@pytest.mark.parametrize("method", METHODS)
def test_collinear_endpoints_warn(method):
    with pytest.warns(RankDeficiencyWarning):
        estimate_pose(_two_line_scene(), method)


def test_single_line_rejected():
    pose = Pose.look_at([0, 0, 25.0])
    t = np.linspace(-4, 4, 11)
    a = lambda s: np.column_stack([s + 1, 0.5 * s + 2, 0.3 * s + 1])
    E = np.stack([a(t[:-1]), a(t[1:])], axis=1)
    Xc = pose.to_camera(E)
    c = CorrespondenceSet.from_segments(E, Xc[..., :2] / Xc[..., 2:])
    with pytest.raises(DegenerateInputError):
        estimate_pose(c, "dlt_lines")


@pytest.mark.parametrize("method", METHODS)
def test_pose_invariants_under_noise(method, rng):
    sc = scene(rng, lines=30, sigma=20.0)
    pose, _ = estimate_pose(sc.correspondences(), method)
    assert np.linalg.norm(pose.R.T @ pose.R - np.eye(3)) <= 1e-9
    assert np.linalg.det(pose.R) == pytest.approx(1.0, abs=1e-9)


def test_segment_weights(rng):
    sc = scene(rng, lines=30)
    c = sc.correspondences()
    length = np.linalg.norm(np.diff(sc.normalized_segments(), axis=1)[:, 0], axis=1)
    np.testing.assert_allclose(c.line_weights, length / length.mean())
    np.testing.assert_allclose(c.point_weights, np.repeat(c.line_weights, 2))
    assert c.subset([0, 3]).line_weights.tolist() == c.line_weights[[0, 3]].tolist()


def test_weighting_scales_only_line_rows(rng):
    c = scene(rng, lines=30).correspondences()
    plain = build_measurement(c, "combined21", balance=False)
    lines = build_measurement(c, "combined21", balance=False, weighting="lines")
    ll = plain.kinds == "ll"
    np.testing.assert_array_equal(lines.M[~ll], plain.M[~ll])
    np.testing.assert_allclose(lines.M[ll], plain.M[ll] * np.repeat(c.line_weights, 2)[:, None])


def test_unit_weights_match_unweighted(rng):
    sc = scene(rng, lines=30, sigma=2.0)
    c = sc.correspondences()
    c.line_weights = np.ones(len(c.lines3d))
    for method in METHODS:
        a, _ = estimate_pose(c, method, SolverConfig(weighting="lines"))
        b, _ = estimate_pose(c, method, SolverConfig(weighting="none"))
        np.testing.assert_allclose(a.T, b.T, atol=1e-9)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        CorrespondenceSet(lines3d=np.ones((2, 6)), lines2d=np.ones((2, 3)), line_weights=[1.0, -1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(k=1.5)
    with pytest.raises(ValueError):
        SolverConfig(prenorm=("vi",))
    with pytest.raises(ValueError):
        SolverConfig(weighting="squares")
    with pytest.raises(ValueError):
        SolverConfig(block_weighting="max")
    assert SolverConfig(prenorm=("iii", "i")).prenorm == ("i", "iii")


def test_method_aliases():
    assert canonical_method("DLT-Combined-Lines") == "dlt_combined"
    assert canonical_method("dlt-plucker") == "dlt_plucker"
    assert canonical_method("DLT-Plücker-Lines") == "dlt_plucker"
    assert canonical_method("DLT-Lines") == "dlt_lines"
    with pytest.raises(ValueError):
        canonical_method("epnp")
