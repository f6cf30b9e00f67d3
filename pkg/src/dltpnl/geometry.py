"""Projective primitives, Plücker lines and the camera model.

Conventions
-----------
* Homogeneous 3D points are 4-vectors, 2D points and 2D lines are 3-vectors.
* A 3D line is a Plücker 6-vector ``L = (U, V)`` where ``V`` is the direction
  and ``U`` the normal of the plane through the line and the origin.
* A camera pose is a rotation ``R`` (world -> camera) and the camera position
  ``T`` in world coordinates, so that ``X_cam = R (X - T)``.
* The camera Z axis points *behind* the camera: visible points have negative
  Z in the camera frame.
* ``vec`` is column-major everywhere.

All functions accept single vectors or stacks of them along the first axis
unless noted otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError

_EPS = np.finfo(float).eps


def skew(v):
    """Cross-product matrix ``[v]x`` so that ``skew(a) @ b == cross(a, b)``.

    A stack of shape (n, 3) yields (n, 3, 3).
    """
    v = np.asarray(v, dtype=float)
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def vec(P):
    """Column-major vectorization."""
    return np.asarray(P, dtype=float).reshape(-1, order="F")


def unvec(p, rows=3):
    return np.asarray(p, dtype=float).reshape((rows, -1), order="F")


def homogeneous_angle(a, b):
    """``1 - |cos|`` between two coordinate vectors; 0 iff equal up to scale."""
    a = np.ravel(a)
    b = np.ravel(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return float(1.0 - abs(a @ b) / (na * nb))


def equal_up_to_scale(a, b, tol=1e-8):
    return homogeneous_angle(a, b) <= tol


def cofactor(A):
    """Cofactor matrix ``det(A) A^-T``; maps cross products ``A a x A b = cof(A) (a x b)``."""
    A = np.asarray(A, dtype=float)
    return np.linalg.det(A) * np.linalg.inv(A).T


def dehomogenize(X):
    X = np.asarray(X, dtype=float)
    return X[..., :-1] / X[..., -1:]


def homogenize(x):
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Camera orientation ``R`` and position ``T`` in the world frame."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        T = np.array(self.T, dtype=float).reshape(3)
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-9 or abs(np.linalg.det(R) - 1) > 1e-9:
            raise ValueError("R is not a rotation matrix")
        if not np.all(np.isfinite(T)):
            raise ValueError("T must be finite")
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, position, target=(0.0, 0.0, 0.0), roll=0.0):
        """Camera at ``position`` viewing ``target``; ``roll`` (radians) spins it about the optical axis."""
        position = np.asarray(position, dtype=float)
        z = position - np.asarray(target, dtype=float)
        z /= np.linalg.norm(z)
        helper = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        x = np.cross(helper, z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        c, s = np.cos(roll), np.sin(roll)
        x, y = c * x + s * y, -s * x + c * y
        return cls(np.vstack([x, y, z]), position)

    def to_camera(self, X):
        """Map Euclidean world points (..., 3) to the camera frame."""
        return (np.asarray(X, dtype=float) - self.T) @ self.R.T


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: square pixels, no skew, no distortion."""

    focal: float = 800.0
    principal_point: tuple = (320.0, 240.0)
    image_size: tuple = (640, 480)
    K: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError("image size must be positive")
        cx, cy = self.principal_point
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise ValueError("principal point outside the image")
        object.__setattr__(self, "principal_point", (float(cx), float(cy)))
        object.__setattr__(self, "image_size", (int(w), int(h)))
        K = np.array([[self.focal, 0.0, cx], [0.0, self.focal, cy], [0.0, 0.0, 1.0]])
        K.flags.writeable = False
        object.__setattr__(self, "K", K)

    def pixels_to_normalized(self, uv):
        uv = np.asarray(uv, dtype=float)
        return (uv - np.asarray(self.principal_point)) / self.focal

    def normalized_to_pixels(self, xy):
        xy = np.asarray(xy, dtype=float)
        return xy * self.focal + np.asarray(self.principal_point)


# ---------------------------------------------------------------------------
# Plücker lines
# ---------------------------------------------------------------------------


def plucker_from_points(X, Y):
    """Plücker coordinates of the line joining homogeneous points ``X`` and ``Y``.

    ``U = X[:3] x Y[:3]`` and ``V = X4 * Y[:3] - Y4 * X[:3]``.

    Raises
    ------
    DegenerateInputError
        If ``X`` and ``Y`` are equal up to scale.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    U = np.cross(X[..., :3], Y[..., :3])
    V = X[..., 3:4] * Y[..., :3] - Y[..., 3:4] * X[..., :3]
    L = np.concatenate([U, V], axis=-1)
    scale = np.linalg.norm(X, axis=-1) * np.linalg.norm(Y, axis=-1)
    if np.any(np.linalg.norm(L, axis=-1) <= 1e-12 * scale):
        raise DegenerateInputError("points coincide; line is undefined")
    return L


def plucker_from_segments(A, B):
    """Plücker lines through Euclidean endpoint pairs (..., 3)."""
    return plucker_from_points(homogenize(A), homogenize(B))


def bilinear_residual(L):
    """``|U.V| / (|U| |V| + eps)``; zero for valid lines."""
    L = np.asarray(L, dtype=float)
    U, V = L[..., :3], L[..., 3:]
    return np.abs(np.sum(U * V, axis=-1)) / (
        np.linalg.norm(U, axis=-1) * np.linalg.norm(V, axis=-1) + _EPS
    )


def closest_points_to_origin(L):
    """Point on each line nearest to the origin, ``V x U / |V|^2``."""
    L = np.asarray(L, dtype=float)
    U, V = L[..., :3], L[..., 3:]
    return np.cross(V, U) / np.sum(V * V, axis=-1, keepdims=True)


def point_transform_matrix(A, t):
    """4x4 matrix of the affine map ``x -> A x + t`` on homogeneous points."""
    M = np.eye(4)
    M[:3, :3] = A
    M[:3, 3] = t
    return M


def line_transform_matrix(A, t):
    """6x6 matrix of the same affine map acting on Plücker lines."""
    A = np.asarray(A, dtype=float)
    D = np.zeros((6, 6))
    D[:3, :3] = cofactor(A)
    D[:3, 3:] = skew(t) @ A
    D[3:, 3:] = A
    return D


def transform_plucker(A, t, L):
    """Apply ``x -> A x + t`` to Plücker line(s).

    ``U' = cof(A) U + [t]x A V`` and ``V' = A V``.
    """
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) <= 1e-300:
        raise DegenerateInputError("singular linear part")
    return np.asarray(L, dtype=float) @ line_transform_matrix(A, t).T


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def point_projection_matrix(pose):
    """3x4 matrix ``[R | -R T]``."""
    return np.hstack([pose.R, (-pose.R @ pose.T)[:, None]])


def line_projection_matrix(pose):
    """3x6 matrix ``[R | R [-T]x]``."""
    return np.hstack([pose.R, pose.R @ skew(-pose.T)])


def combined_projection_matrix(pose):
    """3x7 matrix ``[R | -R T | R [-T]x]`` projecting both points and lines."""
    return np.hstack([pose.R, (-pose.R @ pose.T)[:, None], pose.R @ skew(-pose.T)])


def project_point(pose, X):
    """Homogeneous image point(s) of homogeneous world point(s) ``X``."""
    X = np.asarray(X, dtype=float)
    x = X @ point_projection_matrix(pose).T
    if np.any(np.linalg.norm(x, axis=-1) <= 1e-12 * np.linalg.norm(X, axis=-1)):
        raise DegenerateInputError("point coincides with the camera center")
    return x


def project_line(pose, L):
    """Homogeneous image line(s) of Plücker line(s) ``L``."""
    L = np.asarray(L, dtype=float)
    l = L @ line_projection_matrix(pose).T
    # l is R times the moment of L about T
    ref = np.linalg.norm(L[..., :3], axis=-1) + np.linalg.norm(pose.T) * np.linalg.norm(L[..., 3:], axis=-1)
    if np.any(np.linalg.norm(l, axis=-1) <= 1e-12 * ref):
        raise DegenerateInputError("line passes through the camera center")
    return l


def line_through(x, y):
    """Homogeneous 2D line joining homogeneous 2D points."""
    return np.cross(x, y)


def normalize_line2(l):
    """Scale image line(s) so that ``l1^2 + l2^2 = 1``."""
    l = np.asarray(l, dtype=float)
    return l / np.linalg.norm(l[..., :2], axis=-1, keepdims=True)


def pixel_line_to_normalized(K, l_px):
    """Map a pixel-domain line to the normalized image plane (``K^T l``).

    ``K`` may be a 3x3 matrix or :class:`CameraIntrinsics`.
    """
    K = K.K if isinstance(K, CameraIntrinsics) else np.asarray(K, dtype=float)
    return np.asarray(l_px, dtype=float) @ K


def normalized_line_to_pixel(K, l):
    K = K.K if isinstance(K, CameraIntrinsics) else np.asarray(K, dtype=float)
    return np.asarray(l, dtype=float) @ np.linalg.inv(K)


def rotation_about(axis, angle):
    """Rotation matrix for ``angle`` radians about ``axis`` (Rodrigues)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    S = skew(axis)
    return np.eye(3) + np.sin(angle) * S + (1 - np.cos(angle)) * (S @ S)


def rotation_angle(R):
    """Angle in radians of a rotation matrix, stable near 0 and pi."""
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(np.linalg.norm(w), np.trace(R) - 1.0))


def rotation_log(R):
    """Rotation vector (axis * angle) of ``R``."""
    R = np.asarray(R, dtype=float)
    angle = rotation_angle(R)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-6:
        # sin(a)/a ~ 1 - a^2/6
        return 0.5 * w * (1.0 + angle * angle / 6.0)
    if np.pi - angle > 1e-4:
        return angle / (2.0 * np.sin(angle)) * w
    # Near pi the antisymmetric part vanishes; take the axis from the
    # symmetric part of R + I, which is ~ 2 a a^T.
    B = (R + R.T) / 4.0 + np.eye(3) / 2.0
    i = int(np.argmax(np.diag(B)))
    axis = B[:, i] / np.sqrt(B[i, i])
    if axis @ w < 0:
        axis = -axis
    return angle * axis / np.linalg.norm(axis)


def rotation_exp(w):
    w = np.asarray(w, dtype=float)
    angle = np.linalg.norm(w)
    if angle == 0:
        return np.eye(3)
    return rotation_about(w, angle)
