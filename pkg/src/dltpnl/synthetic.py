"""Random synthetic scenes of 3D line segments seen by a pinhole camera."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PnLError
from .geometry import CameraIntrinsics, Pose, homogenize, plucker_from_segments
from .solvers import CorrespondenceSet


@dataclass(frozen=True)
class SingularMode:
    """Quasi-singular scene layout.

    ``kind`` is one of ``none``, ``directions``, ``flatten``, ``concurrent``.
    """

    kind: str = "none"
    count: int = 0
    orthogonal: bool = False
    ratio: float = 1.0
    fraction: float = 0.0

    @classmethod
    def parse(cls, text):
        """Parse ``none``, ``directions:K[:orthogonal]``, ``flatten:R`` or ``concurrent:F``."""
        if isinstance(text, cls):
            return text
        parts = str(text).strip().lower().split(":")
        kind = parts[0]
        try:
            if kind == "none" and len(parts) == 1:
                return cls()
            if kind == "directions" and len(parts) in (2, 3):
                ortho = len(parts) == 3
                if ortho and parts[2] not in ("orthogonal", "ortho"):
                    raise ValueError
                return cls("directions", count=int(parts[1]), orthogonal=ortho)
            if kind == "flatten" and len(parts) == 2:
                return cls("flatten", ratio=float(parts[1]))
            if kind == "concurrent" and len(parts) == 2:
                return cls("concurrent", fraction=float(parts[1]))
        except ValueError:
            pass
        raise ValueError(f"invalid singular mode {text!r}")

    def __str__(self):
        if self.kind == "directions":
            return f"directions:{self.count}" + (":orthogonal" if self.orthogonal else "")
        if self.kind == "flatten":
            return f"flatten:{self.ratio:g}"
        if self.kind == "concurrent":
            return f"concurrent:{self.fraction:g}"
        return "none"


@dataclass(frozen=True)
class SceneConfig:
    lines: int = 100
    sigma: float = 0.0
    cube_side: float = 10.0
    camera_distance: float = 25.0
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    singular: SingularMode = field(default_factory=SingularMode)
    outlier_fraction: float = 0.0
    outlier_sigma: float = 100.0
    seed: int | None = None
    max_attempts: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "singular", SingularMode.parse(self.singular))
        if self.lines < 3:
            raise ValueError("need at least 3 lines")
        if self.sigma < 0 or self.outlier_sigma < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier fraction must lie in [0, 1)")
        s = self.singular
        if s.kind == "flatten" and not 0.0 < s.ratio <= 1.0:
            raise ValueError("flatten ratio must lie in (0, 1]")
        if s.kind == "concurrent" and not 0.0 <= s.fraction <= 1.0:
            raise ValueError("concurrent fraction must lie in [0, 1]")
        if s.kind == "directions" and (s.count < 1 or (s.orthogonal and s.count > 3)):
            raise ValueError("invalid number of directions")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SyntheticScene:
    config: SceneConfig
    pose: Pose
    segments3d: np.ndarray  # (m, 2, 3) world endpoints
    segments2d_clean: np.ndarray  # (m, 2, 2) pixels
    segments2d: np.ndarray  # (m, 2, 2) pixels, noisy
    outliers: np.ndarray  # (m,) bool

    @property
    def intrinsics(self):
        return self.config.intrinsics

    @property
    def lines3d(self):
        return plucker_from_segments(self.segments3d[:, 0], self.segments3d[:, 1])

    def normalized_segments(self, noisy=True):
        S = self.segments2d if noisy else self.segments2d_clean
        return self.intrinsics.pixels_to_normalized(S)

    def correspondences(self, noisy=True):
        return CorrespondenceSet.from_segments(self.segments3d, self.normalized_segments(noisy))


def _inside(P, half):
    return np.all(np.abs(P) <= half, axis=-1)


def _max_extent(mid, d, half):
    """Largest t with mid +- t d inside the cube [-half, half]^3."""
    with np.errstate(divide="ignore"):
        lim = np.where(np.abs(d) > 0, (half - np.abs(mid)) / np.abs(d), np.inf)
    return lim.min(axis=-1)


def _random_directions(rng, k, orthogonal):
    if orthogonal:
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        return Q.T[:k]
    d = rng.standard_normal((k, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _endpoints(config, rng):
    m = config.lines
    half = config.cube_side / 2.0
    mode = config.singular
    if mode.kind == "directions":
        dirs = _random_directions(rng, mode.count, mode.orthogonal)[np.arange(m) % mode.count]
        mid = rng.uniform(-half, half, (m, 3))
        t = _max_extent(mid, dirs, half) * rng.uniform(0.2, 1.0, m)
        return np.stack([mid - t[:, None] * dirs, mid + t[:, None] * dirs], axis=1)
    # consecutive endpoints form a segment
    E = rng.uniform(-half, half, (m, 2, 3))
    if mode.kind == "flatten":
        E[..., 2] *= mode.ratio
    elif mode.kind == "concurrent":
        k = int(round(mode.fraction * m))
        C = rng.uniform(-0.8 * half, 0.8 * half, 3)
        X = E[:k, 0]
        d = C - X
        u = np.minimum(rng.uniform(0.1, 1.0, k), _max_extent(C, d, half))
        E[:k, 1] = C + u[:, None] * d
    return E


def _random_pose(config, rng):
    d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    return Pose.look_at(config.camera_distance * d, roll=rng.uniform(0, 2 * np.pi))


def _project_pixels(pose, K, P):
    Xc = pose.to_camera(P)
    x = Xc[..., :2] / Xc[..., 2:3]
    return K.normalized_to_pixels(x), Xc[..., 2]


def generate_scene(config, rng=None):
    """Random scene per ``config``; ``rng`` overrides ``config.seed``.

    The camera is placed at ``camera_distance`` from the origin in a random
    direction, looking at the origin with a random roll; placements are
    redrawn until every endpoint is in front of the camera and inside the
    image.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    K = config.intrinsics
    w, h = K.image_size
    E = _endpoints(config, rng)
    for _ in range(config.max_attempts):
        pose = _random_pose(config, rng)
        uv, z = _project_pixels(pose, K, E)
        if np.all(z < 0) and np.all((uv >= 0) & (uv <= (w, h))):
            break
    else:
        raise PnLError(f"no camera placement keeps all segments in view after {config.max_attempts} attempts")
    noisy = uv + config.sigma * rng.standard_normal(uv.shape)
    outliers = np.zeros(config.lines, dtype=bool)
    n_out = int(round(config.outlier_fraction * config.lines))
    if n_out:
        outliers[rng.choice(config.lines, n_out, replace=False)] = True
        noisy[outliers] += config.outlier_sigma * rng.standard_normal((n_out, 2, 2))
    return SyntheticScene(config, pose, E, uv, noisy, outliers)
