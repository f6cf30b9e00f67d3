"""Pose error measures: orientation, position and line reprojection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .geometry import homogenize, project_line, rotation_angle


@dataclass(frozen=True)
class PoseError:
    orientation_deg: float
    position: float
    reprojection: float

    def as_tuple(self):
        return (self.orientation_deg, self.position, self.reprojection)


def orientation_error(R_true, R_est):
    """Angle in degrees of the relative rotation ``R_true^T R_est``."""
    return float(np.degrees(rotation_angle(np.asarray(R_true).T @ np.asarray(R_est))))


def position_error(T_true, T_est):
    return float(np.linalg.norm(np.asarray(T_est, dtype=float) - np.asarray(T_true, dtype=float)))


def reprojection_error(pose, segments2d, lines3d, length_weighted=False):
    """Mean over lines of the integrated squared distance between an image
    segment and the projected infinite 3D line.

    With signed endpoint distances ``a`` and ``b`` the per-line integral over
    the unit parameter is ``(a^2 + a b + b^2) / 3``. ``length_weighted``
    multiplies each line's term by its segment length instead.

    ``segments2d`` is (m, 2, 2) in normalized image coordinates.
    """
    S = np.asarray(segments2d, dtype=float).reshape(-1, 2, 2)
    l = project_line(pose, np.asarray(lines3d, dtype=float).reshape(-1, 6))
    n = np.linalg.norm(l[:, :2], axis=1)
    if np.any(n == 0):
        raise DegenerateInputError("a line projects to the line at infinity")
    l = l / n[:, None]
    a = np.sum(homogenize(S[:, 0]) * l, axis=1)
    b = np.sum(homogenize(S[:, 1]) * l, axis=1)
    e = (a * a + a * b + b * b) / 3.0
    if length_weighted:
        e = e * np.linalg.norm(S[:, 1] - S[:, 0], axis=1)
    return float(e.mean())


def pose_error(pose_true, pose_est, segments2d, lines3d):
    return PoseError(
        orientation_error(pose_true.R, pose_est.R),
        position_error(pose_true.T, pose_est.T),
        reprojection_error(pose_est, segments2d, lines3d),
    )
