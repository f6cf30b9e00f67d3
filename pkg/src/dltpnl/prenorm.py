"""Conditioning transforms applied before DLT and their reversion.

Every 3D transform used here is an affine map ``x -> A x + t`` with a positive
diagonal ``A``. Points transform through the 4x4 matrix
``[[A, t], [0, 1]]`` and Plücker lines through the 6x6 matrix
``[[cof(A), [t]x A], [0, A]]``. If a projection matrix ``P`` maps original
primitives, ``P @ inv(T)`` maps transformed ones; the estimate made in the
transformed frame is therefore reverted by right-multiplying with the
transform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, NonConvergenceError, ReconciliationWarning
from .geometry import line_transform_matrix, point_transform_matrix, skew

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

STAGES = ("i", "ii", "iii", "iv", "v")


@dataclass(frozen=True)
class Similarity3:
    """Affine conditioning map ``x -> A x + t`` with diagonal positive ``A``."""

    A: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stages: tuple = ()

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(A)) == 0:
            raise DegenerateInputError("singular scaling")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "t", np.array(self.t, dtype=float).reshape(3))

    @property
    def is_isotropic(self):
        d = np.diag(self.A)
        return bool(np.allclose(self.A, np.diag(d)) and np.ptp(d) <= 1e-12 * np.max(np.abs(d)))

    def point_matrix(self):
        return point_transform_matrix(self.A, self.t)

    def line_matrix(self):
        return line_transform_matrix(self.A, self.t)

    def apply_points(self, X):
        return np.asarray(X, dtype=float) @ self.point_matrix().T

    def apply_lines(self, L):
        return np.asarray(L, dtype=float) @ self.line_matrix().T

    def then(self, other):
        """Composition: first ``self``, then ``other``."""
        return Similarity3(
            other.A @ self.A,
            other.A @ self.t + other.t,
            self.stages + tuple(s for s in other.stages if s not in self.stages),
        )


def _check_count(n, minimum, what):
    if n < minimum:
        raise DegenerateInputError(f"need at least {minimum} {what}, got {n}")


def normalize_points_scale(X):
    """Stage (i) for points: rescale so that ``X4 = 1``."""
    X = np.asarray(X, dtype=float)
    if np.any(X[:, 3] == 0):
        raise DegenerateInputError("points at infinity cannot be normalized")
    return X / X[:, 3:4]


def normalize_lines_scale(L):
    """Stage (i) for lines: rescale so that ``|V| = sqrt(3)``."""
    L = np.asarray(L, dtype=float)
    nv = np.linalg.norm(L[:, 3:], axis=1, keepdims=True)
    if np.any(nv == 0):
        raise DegenerateInputError("line at infinity (V = 0)")
    return L * (SQRT3 / nv)


def prenorm_points_3d(points):
    """Center 3D points at the origin and scale to mean distance sqrt(3).

    Returns the transformed points (with ``X4 = 1``) and the applied
    :class:`Similarity3`.
    """
    X = normalize_points_scale(points)
    _check_count(len(X), 2, "points")
    c = X[:, :3].mean(axis=0)
    d = np.linalg.norm(X[:, :3] - c, axis=1).mean()
    if d <= 1e-12 * max(1.0, np.linalg.norm(c)):
        raise DegenerateInputError("all points coincide")
    s = SQRT3 / d
    sim = Similarity3(s * np.eye(3), -s * c, ("points3d",))
    return sim.apply_points(X), sim


def prenorm_lines_2d(lines):
    """Hartley-style normalization of image lines read as dual 2D points.

    Each line ``(l1, l2, l3)`` is treated as the homogeneous point
    ``(l1/l3, l2/l3)``. The dual points are centered, scaled per axis to unit
    RMS, and finally scaled jointly so that their mean distance from the origin
    is sqrt(2). Returns the transformed lines and the 3x3 matrix ``t`` with
    ``l' = t l``.
    """
    l = np.asarray(lines, dtype=float)
    _check_count(len(l), 2, "lines")
    if np.any(l[:, 2] == 0):
        raise DegenerateInputError("line through the image origin has no finite dual point")
    p = l[:, :2] / l[:, 2:3]
    c = p.mean(axis=0)
    q = p - c
    spread = np.sqrt(np.mean(q * q, axis=0))
    if np.max(spread) <= 1e-12 * max(1.0, np.max(np.abs(c))):
        raise DegenerateInputError("all lines identical")
    axis_scale = np.where(spread > 1e-12 * np.max(spread), 1.0 / np.where(spread > 0, spread, 1.0), 1.0)
    q = q * axis_scale
    axis_scale = axis_scale * (SQRT2 / np.linalg.norm(q, axis=1).mean())
    t = np.array(
        [
            [axis_scale[0], 0.0, -axis_scale[0] * c[0]],
            [0.0, axis_scale[1], -axis_scale[1] * c[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    return l @ t.T, t


def generalized_weiszfeld(points, directions, q=2.0, x0=None, tol=1e-10, max_iter=100):
    """Point minimizing ``sum_i d_i(x)^q`` where ``d_i`` is the distance to line i.

    Lines are given by a point on them and a direction. For ``q = 2`` the first
    step is already the exact minimizer and the second confirms convergence.

    ``tol`` is relative to the spread of ``points``. When all lines are
    parallel the minimizer is a whole line; the least-squares step then
    picks the point on it nearest the current estimate.
    """
    P = np.asarray(points, dtype=float)
    D = np.asarray(directions, dtype=float)
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    proj = np.eye(3)[None] - D[:, :, None] * D[:, None, :]
    x = np.zeros(3) if x0 is None else np.asarray(x0, dtype=float)
    diameter = max(float(np.ptp(P, axis=0).max()) if len(P) > 1 else 0.0, 1.0)
    for _ in range(max_iter):
        r = np.einsum("nij,nj->ni", proj, x - P)
        dist = np.linalg.norm(r, axis=1)
        if q == 2:
            w = np.ones(len(P))
        else:
            # zero-distance lines would get infinite weight
            w = np.where(dist > 1e-15 * diameter, np.maximum(dist, 1e-15 * diameter) ** (q - 2), 0.0)
        H = np.einsum("n,nij->ij", w, proj)
        b = np.einsum("n,nij,nj->i", w, proj, P)
        x_new = x + np.linalg.lstsq(H, b - H @ x, rcond=None)[0]
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step <= tol * diameter:
            return x
    raise NonConvergenceError(f"Weiszfeld iteration did not converge in {max_iter} steps")


def _apply_lines_renorm(sim, L):
    return normalize_lines_scale(sim.apply_lines(L))


def prenorm_plucker_lines(lines, max_iter=100):
    """Condition Plücker lines: |V| = sqrt(3), translate, then scale.

    The translation moves the origin to the point with the least sum of
    squared distances to all lines. The scale is then chosen so that the mean
    of ``|U|`` equals the mean of ``|V|`` (isotropic; each line is renormalized
    to ``|V| = sqrt(3)`` afterwards). Scaling is skipped when every line passes
    through the new origin; ``'scale-skipped'`` is then recorded in the stages.

    Returns the transformed lines and the :class:`Similarity3`.
    """
    L = normalize_lines_scale(lines)
    _check_count(len(L), 2, "lines")
    U, V = L[:, :3], L[:, 3:]
    through_origin = np.linalg.norm(U, axis=1) <= 1e-12 * np.linalg.norm(V, axis=1)
    if np.all(through_origin):
        c = np.zeros(3)
    else:
        base = np.cross(V, U) / np.sum(V * V, axis=1, keepdims=True)
        c = generalized_weiszfeld(base, V, q=2.0, max_iter=max_iter)
    sim = Similarity3(np.eye(3), -c, ("plucker-translate",))
    Lt = _apply_lines_renorm(sim, L)
    mean_u = np.linalg.norm(Lt[:, :3], axis=1).mean()
    if mean_u <= 1e-12:
        return Lt, Similarity3(sim.A, sim.t, sim.stages + ("scale-skipped",))
    # x -> s x maps (U, V) to (s^2 U, s V) ~ (s U, V) after renormalization
    s = SQRT3 / mean_u
    sim = sim.then(Similarity3(s * np.eye(3), np.zeros(3), ("plucker-scale",)))
    return _apply_lines_renorm(sim, L), sim


def combined_translation(X, L):
    """Translation ``t`` minimizing ``sum |X_i + t|^2 + sum |U_j + t x V_j|^2``.

    ``X`` are Euclidean points (n, 3) and ``L`` Plücker lines (m, 6).
    """
    X = np.asarray(X, dtype=float)
    L = np.asarray(L, dtype=float)
    U, V = L[:, :3], L[:, 3:]
    S = skew(V)  # U + t x V = U - [V]x t
    H = len(X) * np.eye(3) + np.einsum("nki,nkj->ij", S, S)
    b = -X.sum(axis=0) + np.einsum("nki,nk->i", S, U)
    return np.linalg.solve(H, b)


def combined_translation_gradient(X, L, t):
    X = np.asarray(X, dtype=float)
    L = np.asarray(L, dtype=float)
    S = skew(L[:, 3:])
    r = L[:, :3] - np.einsum("nij,j->ni", S, t)
    return 2 * (X + t).sum(axis=0) - 2 * np.einsum("nki,nk->i", S, r)


def balance_scales(X, L):
    """Per-axis factors equalizing ``mean|X_k| + mean|L_k|`` with ``mean|X4| + mean|V|``.

    Returns the three per-axis scale factors (before isotropic averaging).
    """
    a = np.abs(X[:, :3]).mean(axis=0) + np.abs(L[:, :3]).mean(axis=0)
    b = np.abs(X[:, 3]).mean() + np.abs(L[:, 3:]).mean()
    if np.any(a <= 0):
        raise DegenerateInputError("zero coordinate spread; cannot balance")
    return b / a


def prenorm_combined(points, lines, stages=("i", "ii", "iii", "iv"), anisotropic=False):
    """Joint conditioning of 3D points and Plücker lines for the combined method.

    Stages (cumulative, any subset may be requested):

    ``i``   rescale each point to ``X4 = 1`` and each line to ``|V| = sqrt(3)``
    ``ii``  translate the point centroid to the origin
    ``iii`` translate to minimize the joint squared magnitude of point
            coordinates and line moments
    ``iv``  scale so the average magnitudes of the point/moment coordinates
            balance the ``X4``/direction entries (a single isotropic factor, the
            geometric mean of the per-axis factors, unless ``anisotropic``)

    Stage ``v`` (block weighting) acts on the measurement matrix and is ignored
    here. 2D lines are never transformed.

    Returns ``(points', lines', Similarity3, stage_log)`` where ``stage_log``
    is a list of ``(stage, Similarity3)`` pairs in application order.
    """
    X = np.asarray(points, dtype=float)
    L = np.asarray(lines, dtype=float)
    if len(X) == 0 or len(L) == 0:
        raise DegenerateInputError("combined prenormalization needs points and lines")
    stages = tuple(stages)
    renorm = "i" in stages
    if renorm:
        X = normalize_points_scale(X)
        L = normalize_lines_scale(L)
    total = Similarity3()
    log = []

    def step(name, sim):
        nonlocal X, L, total
        X = sim.apply_points(X)
        L = sim.apply_lines(L)
        if renorm:
            X = normalize_points_scale(X)
            L = normalize_lines_scale(L)
        total = total.then(Similarity3(sim.A, sim.t, (name,)))
        log.append((name, sim))

    if renorm:
        log.append(("i", Similarity3(stages=("i",))))
        total = Similarity3(stages=("i",))
    if "ii" in stages:
        c = (X[:, :3] / X[:, 3:4]).mean(axis=0)
        step("ii", Similarity3(np.eye(3), -c))
    if "iii" in stages:
        Xe = X[:, :3] / X[:, 3:4]
        step("iii", Similarity3(np.eye(3), combined_translation(Xe, L)))
    if "iv" in stages:
        f = balance_scales(X / X[:, 3:4], L)
        A = np.diag(f) if anisotropic else np.cbrt(np.prod(f)) * np.eye(3)
        step("iv", Similarity3(A, np.zeros(3)))
    return X, L, total, log


def balance_measurement_blocks(M_point, M_line):
    """Weights ``(a_point, a_line)`` with ``a_point |M_point| = a_line |M_line|`` and product 1."""
    fp = np.linalg.norm(M_point)
    fl = np.linalg.norm(M_line)
    if fp == 0 or fl == 0:
        raise DegenerateInputError("cannot balance an all-zero measurement block")
    a = np.sqrt(fl / fp)
    return a, 1.0 / a


def revert_prenorm_point_matrix(P_hat, T4=None, t2d=None):
    """Undo conditioning on an estimated 3x4 point projection matrix: ``t2d^T P T4``."""
    P = np.asarray(P_hat, dtype=float)
    if T4 is not None:
        P = P @ (T4.point_matrix() if isinstance(T4, Similarity3) else T4)
    if t2d is not None:
        P = np.asarray(t2d).T @ P
    return P


def revert_prenorm_line_matrix(P_hat, D6=None, t2d=None):
    """Undo conditioning on an estimated 3x6 line projection matrix: ``t2d^-1 P D6``."""
    P = np.asarray(P_hat, dtype=float)
    if D6 is not None:
        P = P @ (D6.line_matrix() if isinstance(D6, Similarity3) else D6)
    if t2d is not None:
        P = np.linalg.solve(np.asarray(t2d), P)
    return P


_LINE_COLS = [0, 1, 2, 4, 5, 6]


def revert_prenorm_combined(P_hat, transform, warn_tol=1e-6):
    """Undo 3D conditioning on an estimated 3x7 combined projection matrix.

    The point part (columns 1-4) and the line part (columns 1-3, 5-7) are
    reverted separately. Their left 3x3 blocks then differ by a scalar factor
    (exactly so for isotropic scaling); the line part is rescaled by the
    least-squares factor before reassembly.
    """
    P_hat = np.asarray(P_hat, dtype=float)
    Pp = P_hat[:, :4] @ transform.point_matrix()
    Pl = P_hat[:, _LINE_COLS] @ transform.line_matrix()
    Qp, Ql = Pp[:, :3], Pl[:, :3]
    denom = np.sum(Ql * Ql)
    alpha = np.sum(Ql * Qp) / denom if denom > 0 else 1.0
    resid = np.linalg.norm(alpha * Ql - Qp) / max(np.linalg.norm(Qp), 1e-300)
    if resid > warn_tol:
        warnings.warn(
            f"combined reversion: point/line blocks disagree (relative residual {resid:.2e})",
            ReconciliationWarning,
            stacklevel=2,
        )
    return np.hstack([Qp, Pp[:, 3:4], alpha * Pl[:, 3:]])
