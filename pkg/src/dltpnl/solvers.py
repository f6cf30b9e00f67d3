"""Measurement matrices, homogeneous least squares and pose extraction.

Three DLT estimators are provided:

``dlt_lines``
    3D points on lines against 2D lines, estimating the 3x4 point projection
    matrix ``[R | -RT]`` (12 unknowns).
``dlt_plucker``
    Plücker lines against 2D lines, estimating the 3x6 line projection matrix
    ``[R | R[-T]x]`` (18 unknowns).
``dlt_combined``
    both at once, estimating the 3x7 matrix ``[R | -RT | R[-T]x]`` (21
    unknowns), which needs only 5 lines when each carries 2 points.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import prenorm as pn
from .errors import (
    DegenerateInputError,
    GeodesicAmbiguityError,
    InsufficientCorrespondencesError,
    NoPlausibleSolutionError,
    RankDeficiencyWarning,
    RotationAmbiguityWarning,
)
from .geometry import (
    Pose,
    homogenize,
    normalize_line2,
    plucker_from_segments,
    closest_points_to_origin,
    rotation_angle,
    rotation_exp,
    rotation_log,
    skew,
    line_through,
)

METHODS = ("dlt_lines", "dlt_plucker", "dlt_combined")
WEIGHTINGS = ("none", "lines", "all")

_Z = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def canonical_method(name):
    """Accept ``dlt-combined`` style spellings and return ``dlt_combined``."""
    key = name.strip().lower().replace("-", "_").replace("ü", "u")
    if key.endswith("_lines") and key != "dlt_lines":
        key = key[: -len("_lines")]
    aliases = {"lines": "dlt_lines", "plucker": "dlt_plucker", "combined": "dlt_combined"}
    key = aliases.get(key, key)
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
    return key


@dataclass(frozen=True)
class SolverConfig:
    """Tunables shared by the three estimators.

    ``k`` interpolates between the two rotation/translation estimates of the
    combined matrix. ``prenorm`` lists the active conditioning stages; the
    point and line methods only distinguish empty from non-empty.

    ``block_weighting`` selects how stage (v) weights the point and line rows
    of the combined matrix: ``"frobenius"`` equalizes the block norms only,
    ``"residual"`` (default) then refines the weights for up to
    ``reweight_iterations`` solves so that both blocks have the same residual
    per unit norm of the unknowns they constrain.

    ``weighting`` chooses which measurement rows carry the per-correspondence
    weights of the input (see :class:`CorrespondenceSet`).
    """

    k: float = 0.7
    use_two_rows_per_line: bool = True
    cheirality_samples: int = 200
    prenorm: tuple = pn.STAGES
    anisotropic: bool = False
    block_weighting: str = "residual"
    reweight_iterations: int = 3
    weighting: str = "lines"

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError("k must lie in [0, 1]")
        if self.block_weighting not in ("frobenius", "residual"):
            raise ValueError(f"unknown block weighting {self.block_weighting!r}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.reweight_iterations < 0:
            raise ValueError("reweight_iterations must be non-negative")
        bad = set(self.prenorm) - set(pn.STAGES)
        if bad:
            raise ValueError(f"unknown prenormalization stages: {sorted(bad)}")
        object.__setattr__(self, "prenorm", tuple(s for s in pn.STAGES if s in self.prenorm))


@dataclass
class CorrespondenceSet:
    """3D/2D correspondences in normalized image coordinates.

    ``points3d[i] <-> point_lines2d[i]``
        homogeneous 3D point lying on the 3D line imaged as the 2D line
    ``lines3d[j] <-> lines2d[j]``
        Plücker line and its image line
    ``pp_points3d[k] <-> pp_points2d[k]``
        homogeneous 3D point and its homogeneous image point

    Each correspondence belongs to a group (``*_group``); groups are the units
    counted by minimum-size checks and rejected by outlier removal. Built from
    segments, a group is one segment: two point-line rows and one line-line
    correspondence.

    ``point_weights`` and ``line_weights`` scale the measurement rows of the
    point-line and line-line correspondences (default 1). :meth:`from_segments`
    sets them to the image segment length over its mean: the direction of a
    short segment is poorly determined by its noisy endpoints.
    """

    points3d: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    point_lines2d: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    lines3d: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    lines2d: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    pp_points3d: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    pp_points2d: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    point_group: np.ndarray = None
    line_group: np.ndarray = None
    pp_group: np.ndarray = None
    point_weights: np.ndarray = None
    line_weights: np.ndarray = None

    def __post_init__(self):
        self.points3d = np.asarray(self.points3d, dtype=float).reshape(-1, 4)
        self.point_lines2d = np.asarray(self.point_lines2d, dtype=float).reshape(-1, 3)
        self.lines3d = np.asarray(self.lines3d, dtype=float).reshape(-1, 6)
        self.lines2d = np.asarray(self.lines2d, dtype=float).reshape(-1, 3)
        self.pp_points3d = np.asarray(self.pp_points3d, dtype=float).reshape(-1, 4)
        self.pp_points2d = np.asarray(self.pp_points2d, dtype=float).reshape(-1, 3)
        if len(self.points3d) != len(self.point_lines2d):
            raise ValueError("points3d and point_lines2d differ in length")
        if len(self.lines3d) != len(self.lines2d):
            raise ValueError("lines3d and lines2d differ in length")
        if len(self.pp_points3d) != len(self.pp_points2d):
            raise ValueError("pp_points3d and pp_points2d differ in length")
        n, m, p = len(self.points3d), len(self.lines3d), len(self.pp_points3d)
        if self.point_group is None:
            self.point_group = np.arange(n)
        if self.line_group is None:
            self.line_group = np.arange(n, n + m)
        if self.pp_group is None:
            self.pp_group = np.arange(n + m, n + m + p)
        self.point_group = np.asarray(self.point_group, dtype=int).reshape(n)
        self.line_group = np.asarray(self.line_group, dtype=int).reshape(m)
        self.pp_group = np.asarray(self.pp_group, dtype=int).reshape(p)
        self.point_weights = _weights(self.point_weights, n, "point_weights")
        self.line_weights = _weights(self.line_weights, m, "line_weights")

    @classmethod
    def from_segments(cls, segments3d, segments2d):
        """Correspondences from matched segments.

        ``segments3d`` is (m, 2, 3) world endpoints, ``segments2d`` is (m, 2, 2)
        endpoints in the normalized image plane. Each 3D endpoint yields a
        point-line correspondence with the image line through the 2D endpoints.
        """
        S3 = np.asarray(segments3d, dtype=float).reshape(-1, 2, 3)
        S2 = np.asarray(segments2d, dtype=float).reshape(-1, 2, 2)
        if len(S3) != len(S2):
            raise ValueError("segment lists differ in length")
        m = len(S3)
        l = normalize_line2(line_through(homogenize(S2[:, 0]), homogenize(S2[:, 1])))
        groups = np.arange(m)
        length = np.linalg.norm(S2[:, 1] - S2[:, 0], axis=1)
        w = length / length.mean() if m and length.mean() > 0 else np.ones(m)
        return cls(
            points3d=homogenize(S3.reshape(-1, 3)),
            point_lines2d=np.repeat(l, 2, axis=0),
            lines3d=plucker_from_segments(S3[:, 0], S3[:, 1]),
            lines2d=l,
            point_group=np.repeat(groups, 2),
            line_group=groups,
            point_weights=np.repeat(w, 2),
            line_weights=w,
        )

    @property
    def groups(self):
        return np.unique(np.concatenate([self.point_group, self.line_group, self.pp_group]))

    def subset(self, keep_groups):
        keep = np.asarray(keep_groups)
        pm = np.isin(self.point_group, keep)
        lm = np.isin(self.line_group, keep)
        qm = np.isin(self.pp_group, keep)
        return CorrespondenceSet(
            self.points3d[pm], self.point_lines2d[pm], self.lines3d[lm], self.lines2d[lm],
            self.pp_points3d[qm], self.pp_points2d[qm],
            self.point_group[pm], self.line_group[lm], self.pp_group[qm],
            self.point_weights[pm], self.line_weights[lm],
        )

    def reference_points(self, limit=None):
        """Euclidean 3D points for cheirality checks (points, else closest line points)."""
        X = np.vstack([self.points3d, self.pp_points3d])
        if len(X):
            P = X[:, :3] / X[:, 3:4]
        else:
            P = closest_points_to_origin(self.lines3d)
        if limit is not None and len(P) > limit:
            P = P[np.linspace(0, len(P) - 1, limit).astype(int)]
        return P


def _weights(w, n, name):
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float).reshape(-1)
    if len(w) != n:
        raise ValueError(f"{name} has {len(w)} entries, expected {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    return w


@dataclass
class MeasurementMatrix:
    """Stacked DLT equations with per-row provenance.

    ``kinds`` tags each row as ``'pl'`` (point-line), ``'ll'`` (line-line)
    or ``'pp'`` (point-point); ``groups`` holds the correspondence group.
    """

    M: np.ndarray
    kinds: np.ndarray
    groups: np.ndarray
    target: str
    weights: tuple = (1.0, 1.0)

    @property
    def shape(self):
        return self.M.shape

    def correspondence_residuals(self, p):
        """Per-group Euclidean norm of row residuals ``M p``.

        Returns ``(unique_groups, residuals)``.
        """
        r = self.M @ p
        ug, inv = np.unique(self.groups, return_inverse=True)
        acc = np.zeros(len(ug))
        np.add.at(acc, inv, r * r)
        return ug, np.sqrt(acc)


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------


def rows_point_line(X, l):
    """Row(s) ``X^T kron l^T`` with ``row . vec(P) = l^T P X``; (n, 12) for stacks."""
    X = np.asarray(X, dtype=float)
    l = np.asarray(l, dtype=float)
    k = X.shape[-1]
    return (X[..., :, None] * l[..., None, :]).reshape(X.shape[:-1] + (3 * k,))


def _kron_skew(A, x):
    """``A^T kron [x]x`` for stacks: (n, k) and (n, 3) -> (n, 3, 3k)."""
    S = skew(x)
    n, k = A.shape
    return (A[:, None, :, None] * S[:, :, None, :]).reshape(n, 3, 3 * k)


def _drop_dependent_row(R, x):
    """Keep the two rows of ``A kron [x]x`` with the largest norm (drop row argmax|x_r|)."""
    drop = np.argmax(np.abs(x), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[drop]
    return np.take_along_axis(R, keep[:, :, None], axis=1)


def rows_line_line(L, l, two_rows=True):
    """Rows ``L^T kron [l]x`` of the 18-column line system (2 or 3 rows)."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    l = np.atleast_2d(np.asarray(l, dtype=float))
    R = _kron_skew(L, l)
    if two_rows:
        R = _drop_dependent_row(R, l)
    return R[0] if R.shape[0] == 1 else R


def rows_point_point(X, x, two_rows=True):
    """Rows ``X^T kron [x]x`` of the 12-column point system (2 or 3 rows)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    R = _kron_skew(X, x)
    if two_rows:
        R = _drop_dependent_row(R, x)
    return R[0] if R.shape[0] == 1 else R


def _flatten_rows(R, groups, kind):
    n, r, d = R.shape
    return R.reshape(n * r, d), np.repeat(groups, r), np.full(n * r, kind)


def check_minimum(corrs, method):
    """Raise :class:`InsufficientCorrespondencesError` if ``corrs`` is too small for ``method``."""
    method = canonical_method(method)
    n = len(corrs.points3d)
    m = len(corrs.lines3d)
    p = len(corrs.pp_points3d)
    if method == "dlt_lines":
        distinct = len(np.unique(corrs.point_group))
        if distinct < 6:
            raise InsufficientCorrespondencesError(
                f"dlt_lines needs points on at least 6 distinct lines, got {distinct}"
            )
        if n + 2 * p < 11:
            raise InsufficientCorrespondencesError(
                f"dlt_lines needs at least 11 equations, got {n + 2 * p}"
            )
    elif method == "dlt_plucker":
        if m < 9:
            raise InsufficientCorrespondencesError(f"dlt_plucker needs at least 9 lines, got {m}")
    else:
        if m < 5:
            raise InsufficientCorrespondencesError(f"dlt_combined needs at least 5 lines, got {m}")
        if n + p < 3:
            raise InsufficientCorrespondencesError(
                f"dlt_combined needs at least 3 points, got {n + p}"
            )
        if n + 2 * p + 2 * m < 20:
            raise InsufficientCorrespondencesError(
                f"dlt_combined needs (n + 2m) >= 20, got n={n + 2 * p}, m={m}"
            )


def build_measurement(corrs, target, two_rows=True, balance=True, check=True, weighting="none"):
    """Stack measurement rows for ``target`` in ``{'point12', 'line18', 'combined21'}``.

    Point rows of the combined matrix occupy columns 1-12 and line rows columns
    1-9 and 13-21. With ``balance`` the point and line blocks are weighted so
    that their Frobenius norms agree. ``weighting`` applies the per-correspondence
    weights of ``corrs`` to no rows (``"none"``), the line-line rows
    (``"lines"``) or all point-line and line-line rows (``"all"``).
    """
    methods = {"point12": "dlt_lines", "line18": "dlt_plucker", "combined21": "dlt_combined"}
    if target not in methods:
        raise ValueError(f"unknown target {target!r}")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    if check:
        check_minimum(corrs, methods[target])
    blocks = []
    if target in ("point12", "combined21"):
        if len(corrs.points3d):
            R = rows_point_line(corrs.points3d, corrs.point_lines2d)
            if weighting == "all":
                R = R * corrs.point_weights[:, None]
            blocks.append((R, corrs.point_group, np.full(len(corrs.points3d), "pl")))
        if len(corrs.pp_points3d):
            R = _kron_skew(corrs.pp_points3d, corrs.pp_points2d)
            if two_rows:
                R = _drop_dependent_row(R, corrs.pp_points2d)
            blocks.append(_flatten_rows(R, corrs.pp_group, "pp"))
    if target in ("line18", "combined21") and len(corrs.lines3d):
        L = corrs.lines3d
        if target == "combined21":
            L = np.hstack([L[:, :3], np.zeros((len(L), 1)), L[:, 3:]])
        R = _kron_skew(L, corrs.lines2d)
        if two_rows:
            R = _drop_dependent_row(R, corrs.lines2d)
        if weighting != "none":
            R = R * corrs.line_weights[:, None, None]
        blocks.append(_flatten_rows(R, corrs.line_group, "ll"))
    if not blocks:
        raise InsufficientCorrespondencesError("no correspondences")
    groups = np.concatenate([b[1] for b in blocks])
    kinds = np.concatenate([b[2] for b in blocks])
    if target == "combined21":
        pt = kinds != "ll"
        M = _assemble_combined(blocks)
        weights = (1.0, 1.0)
        if balance and pt.any() and (~pt).any():
            weights = pn.balance_measurement_blocks(M[pt], M[~pt])
            M = M.copy()
            M[pt] *= weights[0]
            M[~pt] *= weights[1]
        return MeasurementMatrix(M, kinds, groups, target, weights)
    return MeasurementMatrix(np.vstack([b[0] for b in blocks]), kinds, groups, target)


def _assemble_combined(blocks):
    # point rows are built with 12 columns; pad into the 21-column layout
    rows = []
    for R, _, _ in blocks:
        if R.shape[1] == 12:
            R = np.hstack([R, np.zeros((len(R), 9))])
        rows.append(R)
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# Solution and pose extraction
# ---------------------------------------------------------------------------


def solve_homogeneous(M, gap_tol=1e-12):
    """Unit vector minimizing ``|M p|`` (right singular vector of the smallest singular value).

    Returns ``(p, singular_values)``. Warns with :class:`RankDeficiencyWarning`
    when the two smallest singular values are not separated.
    """
    A = M.M if isinstance(M, MeasurementMatrix) else np.asarray(M, dtype=float)
    rows, d = A.shape
    if rows < d - 1:
        raise InsufficientCorrespondencesError(f"{rows} equations for {d} unknowns")
    if not np.any(A):
        raise DegenerateInputError("measurement matrix is all zeros")
    _, sv, Vt = np.linalg.svd(A, full_matrices=rows < d)
    if rows < d:
        sv = np.concatenate([sv, np.zeros(d - rows)])
    if sv[-2] - sv[-1] <= gap_tol * sv[0]:
        warnings.warn(
            "measurement matrix nullspace is not one-dimensional; solution not unique",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    return Vt[-1], sv


_POINT_COLS = np.r_[0:12]
_LINE_COLS = np.r_[0:9, 12:21]


def solve_combined_reweighted(M, iterations=3, rtol=1e-3):
    """Solve a combined :class:`MeasurementMatrix`, refining the block weights.

    The relative scale of the point-only columns (``-RT``) and the line-only
    columns (``R[-T]x``) is tied together only through the shared left block,
    which is small when the camera is far from the scene. Under image noise
    the plain solution then drifts toward the block with less noise per unit
    norm. Each pass rescales the line rows by ``rho_point / rho_line`` with
    ``rho = |block residual| / |block unknowns|`` and solves again.

    Returns ``(p, singular_values, M_weighted)``.
    """
    A = M.M
    ll = M.kinds == "ll"
    p, sv = solve_homogeneous(A)
    if not ll.any() or ll.all():
        return p, sv, M
    w = 1.0
    B = A
    tiny = 1e-12 * np.linalg.norm(A)
    for _ in range(iterations):
        r = A @ p
        rp = np.linalg.norm(r[~ll])
        rl = np.linalg.norm(r[ll])
        if rp <= tiny or rl <= tiny:
            break  # (near) noise-free; nothing to balance
        w_new = (rp / np.linalg.norm(p[_POINT_COLS])) / (rl / np.linalg.norm(p[_LINE_COLS]))
        B = A.copy()
        B[ll] *= w_new
        p, sv = solve_homogeneous(B)
        done = abs(w_new / w - 1.0) < rtol
        w = w_new
        if done:
            break
    weights = (M.weights[0], M.weights[1] * w)
    return p, sv, MeasurementMatrix(B, M.kinds, M.groups, M.target, weights)


def correct_scale(P):
    """Rescale so the left 3x3 block has unit mean singular value; returns ``(sP, s)``."""
    P = np.asarray(P, dtype=float)
    sv = np.linalg.svd(P[:, :3], compute_uv=False)
    if sv.mean() == 0:
        raise DegenerateInputError("left 3x3 block is zero")
    s = 1.0 / sv.mean()
    return s * P, s


def nearest_rotation(Rp):
    """Rotation nearest to ``Rp`` in Frobenius norm.

    Computed as ``U diag(1, 1, det(U V^T)) V^T``; equals ``det(UV^T) U V^T``
    whenever ``det(Rp) > 0``, which the estimators guarantee by fixing the
    overall sign of the projection matrix first.
    """
    Rp = np.asarray(Rp, dtype=float)
    if not np.any(Rp):
        raise DegenerateInputError("zero matrix has no nearest rotation")
    U, sv, Vt = np.linalg.svd(Rp)
    if np.min(np.diff(sv[::-1])) <= 1e-12 * sv[0] and sv[-1] < sv[0] and np.linalg.det(U @ Vt) < 0:
        warnings.warn("nearest rotation is not unique", RotationAmbiguityWarning, stacklevel=2)
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def _fix_sign(P):
    """Flip the homogeneous sign so the left 3x3 block has positive determinant."""
    return -P if np.linalg.det(P[:, :3]) < 0 else P


def essential_candidates(E):
    """All (R, T) with ``R [-T]x`` proportional to ``E`` up to sign (four pairs).

    Rotations follow ``U W diag(1,1,+-1) V^T`` and ``U W^T diag(1,1,+-1) V^T``,
    translations ``q V Z V^T`` and its negative, with ``q`` the mean of the
    two largest singular values.
    """
    U, sv, Vt = np.linalg.svd(E)
    V = Vt.T
    q = (sv[0] + sv[1]) / 2.0
    cands = []
    for Wm in (_W, _W.T):
        R = U @ Wm @ Vt
        if np.linalg.det(R) < 0:
            R = U @ Wm @ np.diag([1.0, 1.0, -1.0]) @ Vt
        Tx = q * V @ _Z @ Vt
        T = np.array([Tx[2, 1], Tx[0, 2], Tx[1, 0]])
        cands.append((R, T))
        cands.append((R, -T))
    return cands


def decompose_essential(Ep, s=1.0, reference_points=None):
    """Recover ``(R, T)`` from an estimate of ``R [-T]x``.

    Of the four candidates, those matching the sign of ``s * Ep`` are kept and
    the one placing the most reference points in front of the camera
    (negative camera Z) wins. Without reference points only the sign is used
    and the first consistent candidate is returned.

    Raises
    ------
    NoPlausibleSolutionError
        If the best candidate puts most reference points behind the camera.
    """
    E = s * np.asarray(Ep, dtype=float)
    if not np.any(E):
        raise DegenerateInputError("zero essential matrix")
    scored = []
    for R, T in essential_candidates(E):
        fit = np.linalg.norm(E - R @ skew(-T))
        consistent = fit < np.linalg.norm(E)
        if reference_points is not None and len(reference_points):
            z = (np.asarray(reference_points) - T) @ R[2]
            front = int(np.sum(z < 0))
        else:
            front = 0
        scored.append(((consistent, front, -fit), R, T))
    scored.sort(key=lambda c: c[0], reverse=True)
    (consistent, front, _), R, T = scored[0]
    if reference_points is not None and len(reference_points) and 2 * front <= len(reference_points):
        raise NoPlausibleSolutionError("no candidate places the scene in front of the camera")
    return R, T


def extract_pose_dlt_lines(P):
    """Pose from an estimated 3x4 point projection matrix."""
    P = _fix_sign(np.asarray(P, dtype=float))
    sP, _ = correct_scale(P)
    R = nearest_rotation(sP[:, :3])
    T = -R.T @ sP[:, 3]
    return Pose(R, T)


def extract_pose_dlt_plucker(P, reference_points=None):
    """Pose from an estimated 3x6 line projection matrix (essential-matrix route)."""
    P = _fix_sign(np.asarray(P, dtype=float))
    sP, s = correct_scale(P)
    R, T = decompose_essential(P[:, 3:], s, reference_points)
    return Pose(R, T)


def interpolate_rotation(R1, R3, t):
    """``R1 exp(t log(R1^T R3))``: geodesic from ``R1`` (t=0) to ``R3`` (t=1)."""
    rel = R1.T @ R3
    if np.pi - rotation_angle(rel) <= 1e-12:
        raise GeodesicAmbiguityError("relative rotation of pi; interpolation undefined")
    R = R1 @ rotation_exp(t * rotation_log(rel))
    # re-orthonormalize against rounding drift
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def extract_pose_combined(P, config=None, reference_points=None, parts=False):
    """Pose from an estimated 3x7 combined projection matrix.

    ``R1`` comes from the left block, ``T2`` from the fourth column and
    ``(R3, T3)`` from the right block. Both pairs are blended with the same
    weight ``k`` on the left-block estimates::

        T = k T2 + (1 - k) T3
        R = R1 exp((1 - k) log(R1^T R3))

    so that R stays consistent with T. With ``parts=True`` the four partial
    estimates are returned as well.
    """
    config = config or SolverConfig()
    P = _fix_sign(np.asarray(P, dtype=float))
    sP, s = correct_scale(P)
    R1 = nearest_rotation(sP[:, :3])
    T2 = -R1.T @ sP[:, 3]
    R3, T3 = decompose_essential(P[:, 4:], s, reference_points)
    k = config.k
    T = k * T2 + (1.0 - k) * T3
    R = interpolate_rotation(R1, R3, 1.0 - k)
    pose = Pose(R, T)
    if parts:
        return pose, {"R1": R1, "T2": T2, "R3": R3, "T3": T3}
    return pose


@dataclass
class Diagnostics:
    method: str
    residual: float
    singular_values: np.ndarray
    timings: dict
    prenorm: tuple
    rows: int

    @property
    def singular_gap(self):
        sv = self.singular_values
        return float((sv[-2] - sv[-1]) / sv[0]) if sv[0] > 0 else 0.0


def _estimate_lines(corrs, config, t):
    use = bool(config.prenorm)
    X, l = corrs.points3d, corrs.point_lines2d
    sim, t2d = None, None
    if use:
        X, sim = pn.prenorm_points_3d(np.vstack([X, corrs.pp_points3d]))
        X = X[: len(corrs.points3d)]
        l, t2d = pn.prenorm_lines_2d(l)
    work = CorrespondenceSet(
        X, l, pp_points3d=sim.apply_points(corrs.pp_points3d) if use else corrs.pp_points3d,
        pp_points2d=corrs.pp_points2d, point_group=corrs.point_group, pp_group=corrs.pp_group,
        point_weights=corrs.point_weights,
    )
    if use and len(work.pp_points3d):
        # image points transform contragrediently to image lines
        work.pp_points2d = work.pp_points2d @ np.linalg.inv(t2d)
    t["prenorm"] = time.perf_counter()
    M = build_measurement(work, "point12", check=False, weighting=config.weighting)
    t["build"] = time.perf_counter()
    p, sv = solve_homogeneous(M)
    t["solve"] = time.perf_counter()
    P = p.reshape(3, 4, order="F")
    P = pn.revert_prenorm_point_matrix(P, sim, t2d) if use else P
    return extract_pose_dlt_lines(P), M, p, sv


def _estimate_plucker(corrs, config, t):
    use = bool(config.prenorm)
    L, l = corrs.lines3d, corrs.lines2d
    sim, t2d = None, None
    if use:
        L, sim = pn.prenorm_plucker_lines(L)
        l, t2d = pn.prenorm_lines_2d(l)
    t["prenorm"] = time.perf_counter()
    work = CorrespondenceSet(lines3d=L, lines2d=l, line_group=corrs.line_group, line_weights=corrs.line_weights)
    M = build_measurement(work, "line18", two_rows=config.use_two_rows_per_line, check=False,
                          weighting=config.weighting)
    t["build"] = time.perf_counter()
    p, sv = solve_homogeneous(M)
    t["solve"] = time.perf_counter()
    P = p.reshape(3, 6, order="F")
    if use:
        P = pn.revert_prenorm_line_matrix(P, sim, t2d)
    ref = corrs.reference_points(config.cheirality_samples)
    return extract_pose_dlt_plucker(P, ref), M, p, sv


def _estimate_combined(corrs, config, t):
    stages = config.prenorm
    X = np.vstack([corrs.points3d, corrs.pp_points3d])
    L = corrs.lines3d
    sim = None
    if any(s in stages for s in ("i", "ii", "iii", "iv")):
        X, L, sim, _ = pn.prenorm_combined(X, L, stages, anisotropic=config.anisotropic)
    n = len(corrs.points3d)
    work = replace(corrs, points3d=X[:n], lines3d=L, pp_points3d=X[n:])
    t["prenorm"] = time.perf_counter()
    M = build_measurement(work, "combined21", two_rows=config.use_two_rows_per_line,
                          balance="v" in stages, check=False, weighting=config.weighting)
    t["build"] = time.perf_counter()
    if "v" in stages and config.block_weighting == "residual":
        p, sv, M = solve_combined_reweighted(M, config.reweight_iterations)
    else:
        p, sv = solve_homogeneous(M)
    t["solve"] = time.perf_counter()
    P = p.reshape(3, 7, order="F")
    if sim is not None:
        P = pn.revert_prenorm_combined(P, sim)
    ref = corrs.reference_points(config.cheirality_samples)
    return extract_pose_combined(P, config, ref), M, p, sv


_ESTIMATORS = {
    "dlt_lines": _estimate_lines,
    "dlt_plucker": _estimate_plucker,
    "dlt_combined": _estimate_combined,
}


def estimate_pose(corrs, method="dlt_combined", config=None):
    """Full pipeline: prenormalize, build, solve, revert, extract.

    Returns ``(Pose, Diagnostics)``.
    """
    method = canonical_method(method)
    config = config or SolverConfig()
    check_minimum(corrs, method)
    t = {"start": time.perf_counter()}
    pose, M, p, sv = _ESTIMATORS[method](corrs, config, t)
    t["extract"] = time.perf_counter()
    order = ["start", "prenorm", "build", "solve", "extract"]
    timings = {b: t[b] - t[a] for a, b in zip(order, order[1:])}
    timings["total"] = t["extract"] - t["start"]
    diag = Diagnostics(method, float(np.linalg.norm(M.M @ p)), sv, timings, config.prenorm, M.shape[0])
    return pose, diag
