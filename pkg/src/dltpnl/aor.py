"""Algebraic outlier rejection wrapped around the DLT solvers.

Each iteration solves the homogeneous system on the rows of the current
inliers, scores every correspondence by the norm of its row residuals and
keeps those below a residual quantile. The quantile follows a decreasing
schedule and then stays at a floor. The loop stops when the mean inlier
residual no longer decreases or is at rounding level; the final pose comes from the full solver,
prenormalization included, run on the surviving inliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import prenorm as pn
from .errors import InsufficientCorrespondencesError, InsufficientInliersError, NonConvergenceError
from .solvers import (
    SolverConfig,
    build_measurement,
    canonical_method,
    check_minimum,
    estimate_pose,
    solve_homogeneous,
)

_TARGETS = {"dlt_lines": "point12", "dlt_plucker": "line18", "dlt_combined": "combined21"}


@dataclass(frozen=True)
class AorConfig:
    schedule: tuple = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3)
    floor: float = 0.25
    max_iterations: int = 50
    rtol: float = 1e-12
    atol: float = 1e-10  # relative to the RMS row norm; below this the data fit exactly

    def __post_init__(self):
        sched = tuple(float(q) for q in self.schedule)
        object.__setattr__(self, "schedule", sched)
        if any(not 0.0 < q <= 1.0 for q in sched + (self.floor,)):
            raise ValueError("quantiles must lie in (0, 1]")
        if any(b > a for a, b in zip(sched + (self.floor,), sched[1:] + (self.floor,))):
            raise ValueError("quantile schedule must be non-increasing")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    def quantile(self, j):
        return self.schedule[j] if j < len(self.schedule) else self.floor


@dataclass
class AorReport:
    iterations: int
    inliers: np.ndarray  # bool per correspondence group, ordered as `groups`
    groups: np.ndarray
    errors: list = field(default_factory=list)  # mean inlier residual per accepted iteration
    quantiles: list = field(default_factory=list)
    prenorm_deferred: bool = True
    error_measure: str = "mean residual norm over current inliers"

    @property
    def inlier_fraction(self):
        return float(self.inliers.mean()) if len(self.inliers) else 0.0

    def inlier_groups(self):
        return self.groups[self.inliers]


def _residuals(M, row_mask, ug):
    p, _ = solve_homogeneous(M.M[row_mask])
    r = M.M @ p
    acc = np.zeros(len(ug))
    np.add.at(acc, np.searchsorted(ug, M.groups), r * r)
    return np.sqrt(acc)


def _condition_3d(corrs, method, config):
    """Correspondences with only the 3D side conditioned (2D lines untouched)."""
    X, L = corrs.points3d, corrs.lines3d
    Xq = corrs.pp_points3d
    if method == "dlt_combined":
        stages = tuple(s for s in config.prenorm if s != "v")
        if stages:
            Y, L, _, _ = pn.prenorm_combined(np.vstack([X, Xq]), L, stages, anisotropic=config.anisotropic)
            X, Xq = Y[: len(X)], Y[len(X):]
    elif method == "dlt_lines" and config.prenorm:
        Y, _ = pn.prenorm_points_3d(np.vstack([X, Xq]))
        X, Xq = Y[: len(X)], Y[len(X):]
    elif method == "dlt_plucker" and config.prenorm:
        L, _ = pn.prenorm_plucker_lines(L)
    return replace(corrs, points3d=X, lines3d=L, pp_points3d=Xq)


def aor_estimate(corrs, method="dlt_combined", aor_config=None, solver_config=None, condition_3d=True):
    """Robust pose estimate; returns ``(Pose, AorReport)``.

    A correspondence is a group of rows (a segment contributes its endpoint
    rows and its line rows together). Its residual is the Euclidean norm of
    those rows' residuals.

    Raises
    ------
    InsufficientInliersError
        If the surviving correspondences fall below the method minimum.
    NonConvergenceError
        If the error still decreases after ``max_iterations``.
    """
    method = canonical_method(method)
    aor_config = aor_config or AorConfig()
    solver_config = solver_config or SolverConfig()
    check_minimum(corrs, method)
    work = _condition_3d(corrs, method, solver_config) if condition_3d else corrs
    M = build_measurement(work, _TARGETS[method], two_rows=solver_config.use_two_rows_per_line,
                          balance=True, check=False, weighting=solver_config.weighting)
    ug = np.unique(M.groups)
    inliers = np.ones(len(ug), dtype=bool)
    best = inliers
    prev = np.inf
    errors, quantiles = [], []
    exact = aor_config.atol * np.linalg.norm(M.M) / np.sqrt(len(M.M))
    for j in range(aor_config.max_iterations):
        rows = np.isin(M.groups, ug[inliers])
        eps = _residuals(M, rows, ug)
        err = float(eps[inliers].mean())
        if not err < prev * (1.0 - aor_config.rtol):
            break
        prev = err
        best = inliers
        errors.append(err)
        if err <= exact:
            break
        q = aor_config.quantile(j)
        quantiles.append(q)
        inliers = eps <= np.quantile(eps, q)
        try:
            check_minimum(corrs.subset(ug[inliers]), method)
        except InsufficientCorrespondencesError as exc:
            raise InsufficientInliersError(f"too few inliers left: {exc}") from exc
    else:
        raise NonConvergenceError(f"outlier rejection did not settle in {aor_config.max_iterations} iterations")
    pose, _ = estimate_pose(corrs.subset(ug[best]), method, solver_config)
    report = AorReport(len(errors), best, ug, errors, quantiles, bool(solver_config.prenorm))
    return pose, report
