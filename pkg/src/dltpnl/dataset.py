"""Canonical text format for real line-correspondence datasets.

::

    pnl-dataset 1
    # comment
    K <fx> <fy> <cx> <cy>
    L3 <id> <x1> <y1> <z1> <x2> <y2> <z2>
    IMG <image-id>
    K <fx> <fy> <cx> <cy>                 (optional, overrides the file-level K)
    GT <12 reals, row-major 3x4 projection matrix>   (optional)
    C <l3-id> <u1> <v1> <u2> <v2>

``K`` before the first ``IMG`` applies to every image without its own ``K``.
Numbers are written with ``repr`` and read with ``float``, which round-trips
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aor import AorConfig, aor_estimate
from .errors import DatasetParseError, DatasetValidationError, InsufficientCorrespondencesError, PnLError
from .geometry import Pose, plucker_from_segments
from .metrics import PoseError, pose_error
from .solvers import CorrespondenceSet, SolverConfig, canonical_method, check_minimum, estimate_pose, nearest_rotation

HEADER = "pnl-dataset 1"


def intrinsics_matrix(fx, fy, cx, cy):
    return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])


@dataclass
class DatasetImage:
    id: str
    K: np.ndarray
    segments2d: np.ndarray  # (k, 2, 2) pixels
    segment_ids: list  # 3D segment id per row of segments2d
    gt_projection: np.ndarray | None = None  # 3x4

    @property
    def ground_truth(self):
        return None if self.gt_projection is None else pose_from_projection(self.K, self.gt_projection)

    def normalized_segments(self):
        f = np.array([self.K[0, 0], self.K[1, 1]])
        c = np.array([self.K[0, 2], self.K[1, 2]])
        return (self.segments2d - c) / f


@dataclass
class Dataset:
    name: str
    segments3d: dict  # id -> (2, 3) endpoints; insertion order is file order
    images: list = field(default_factory=list)
    K: np.ndarray | None = None  # file-level intrinsics, if any

    def correspondences(self, image):
        """:class:`CorrespondenceSet` of one image (one group per segment)."""
        if not image.segment_ids:
            return CorrespondenceSet()
        S3 = np.stack([self.segments3d[i] for i in image.segment_ids])
        return CorrespondenceSet.from_segments(S3, image.normalized_segments())

    def lines3d(self, image):
        S3 = np.stack([self.segments3d[i] for i in image.segment_ids])
        return plucker_from_segments(S3[:, 0], S3[:, 1])


def pose_from_projection(K, P):
    """Pose from ``P ~ K [R | -R T]``, the overall scale and sign being unknown."""
    M = np.linalg.solve(np.asarray(K, dtype=float), np.asarray(P, dtype=float))
    if np.linalg.det(M[:, :3]) < 0:
        M = -M
    sv = np.linalg.svd(M[:, :3], compute_uv=False)
    if sv.mean() == 0:
        raise DatasetValidationError("ground-truth projection matrix has a zero left block")
    M = M / sv.mean()
    R = nearest_rotation(M[:, :3])
    return Pose(R, -R.T @ M[:, 3])


def projection_from_pose(K, pose):
    R, T = pose.R, pose.T
    return np.asarray(K, dtype=float) @ np.hstack([R, (-R @ T)[:, None]])


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _floats(path, lineno, tokens, count, what):
    if len(tokens) != count:
        raise DatasetParseError(path, lineno, f"{what} expects {count} numbers, got {len(tokens)}")
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise DatasetParseError(path, lineno, f"{what}: {exc}") from None
    for v in vals:
        if not math.isfinite(v):
            raise DatasetValidationError(f"{path}:{lineno}: non-finite number in {what}")
    return vals


def _K(path, lineno, tokens):
    fx, fy, cx, cy = _floats(path, lineno, tokens, 4, "K")
    if fx <= 0 or fy <= 0:
        raise DatasetValidationError(f"{path}:{lineno}: focal lengths must be positive")
    return intrinsics_matrix(fx, fy, cx, cy)


def parse_dataset(text, path="<string>", name=None):
    """Parse dataset text; see :func:`load_dataset`."""
    lines = text.splitlines()
    first = next((i for i, l in enumerate(lines) if l.strip() and not l.strip().startswith("#")), None)
    if first is None or lines[first].strip() != HEADER:
        raise DatasetParseError(path, (first or 0) + 1, f"missing header {HEADER!r}")
    segs = {}
    images = []
    file_K = None
    cur = None  # dict for the image being read
    used = []  # (lineno, image id, l3 id) to validate after reading all L3 rows

    def close():
        if cur is None:
            return
        K = cur["K"] if cur["K"] is not None else file_K
        if K is None:
            raise DatasetValidationError(f"{path}:{cur['line']}: image {cur['id']!r} has no intrinsics")
        S = np.array(cur["segs"], dtype=float).reshape(-1, 2, 2)
        images.append(DatasetImage(cur["id"], K, S, cur["ids"], cur["gt"]))

    for lineno, raw in enumerate(lines[first + 1:], start=first + 2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kw, args = tok[0], tok[1:]
        if kw == "K":
            K = _K(path, lineno, args)
            if cur is None:
                if file_K is not None:
                    raise DatasetParseError(path, lineno, "duplicate file-level K")
                file_K = K
            else:
                if cur["K"] is not None:
                    raise DatasetParseError(path, lineno, f"duplicate K in image {cur['id']!r}")
                cur["K"] = K
        elif kw == "L3":
            if len(args) != 7:
                raise DatasetParseError(path, lineno, f"L3 expects an id and 6 numbers, got {len(args)} fields")
            sid = args[0]
            if sid in segs:
                raise DatasetValidationError(f"{path}:{lineno}: duplicate 3D segment id {sid!r}")
            v = _floats(path, lineno, args[1:], 6, "L3")
            segs[sid] = np.array(v).reshape(2, 3)
        elif kw == "IMG":
            if len(args) != 1:
                raise DatasetParseError(path, lineno, "IMG expects exactly one image id")
            close()
            if any(im.id == args[0] for im in images):
                raise DatasetValidationError(f"{path}:{lineno}: duplicate image id {args[0]!r}")
            cur = {"id": args[0], "K": None, "gt": None, "segs": [], "ids": [], "line": lineno}
        elif kw == "GT":
            if cur is None:
                raise DatasetParseError(path, lineno, "GT outside an IMG block")
            if cur["gt"] is not None:
                raise DatasetParseError(path, lineno, f"duplicate GT in image {cur['id']!r}")
            cur["gt"] = np.array(_floats(path, lineno, args, 12, "GT")).reshape(3, 4)
        elif kw == "C":
            if cur is None:
                raise DatasetParseError(path, lineno, "C outside an IMG block")
            if len(args) != 5:
                raise DatasetParseError(path, lineno, f"C expects an id and 4 numbers, got {len(args)} fields")
            v = _floats(path, lineno, args[1:], 4, "C")
            cur["segs"].append(v)
            cur["ids"].append(args[0])
            used.append((lineno, cur["id"], args[0]))
        else:
            raise DatasetParseError(path, lineno, f"unknown record type {kw!r}")
    close()
    for lineno, img, sid in used:
        if sid not in segs:
            raise DatasetValidationError(f"{path}:{lineno}: image {img!r} references unknown 3D segment id {sid!r}")
    for sid, S in segs.items():
        if np.allclose(S[0], S[1], rtol=0, atol=0):
            raise DatasetValidationError(f"{path}: 3D segment {sid!r} has coincident endpoints")
    return Dataset(name or Path(str(path)).stem, segs, images, file_K)


def load_dataset(path):
    """Load and validate a dataset file.

    Raises
    ------
    DatasetParseError
        Malformed record, with file and line number.
    DatasetValidationError
        Well-formed but inconsistent content (dangling id, non-finite value,
        duplicate id, missing intrinsics).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetValidationError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError as exc:
        raise DatasetParseError(str(path), 0, f"not UTF-8: {exc.reason}") from None
    return parse_dataset(text, str(path))


def _r(v):
    return repr(float(v))


def format_dataset(ds):
    out = [HEADER]
    if ds.K is not None:
        out.append("K " + " ".join(_r(v) for v in (ds.K[0, 0], ds.K[1, 1], ds.K[0, 2], ds.K[1, 2])))
    for sid, S in ds.segments3d.items():
        out.append(f"L3 {sid} " + " ".join(_r(v) for v in S.ravel()))
    for im in ds.images:
        out.append(f"IMG {im.id}")
        if ds.K is None or not np.array_equal(im.K, ds.K):
            K = im.K
            out.append("K " + " ".join(_r(v) for v in (K[0, 0], K[1, 1], K[0, 2], K[1, 2])))
        if im.gt_projection is not None:
            out.append("GT " + " ".join(_r(v) for v in im.gt_projection.ravel()))
        for sid, S in zip(im.segment_ids, im.segments2d):
            out.append(f"C {sid} " + " ".join(_r(v) for v in S.ravel()))
    return "\n".join(out) + "\n"


def save_dataset(ds, path):
    Path(path).write_text(format_dataset(ds), encoding="utf-8")


def dataset_from_scenes(scenes, name="synthetic"):
    """Export synthetic scenes (one image each) sharing a file-level K if possible."""
    segs = {}
    images = []
    Ks = [s.intrinsics.K for s in scenes]
    shared = Ks[0] if all(np.array_equal(K, Ks[0]) for K in Ks) else None
    for k, sc in enumerate(scenes):
        ids = []
        for j, S in enumerate(sc.segments3d):
            sid = f"s{k}_{j}"
            segs[sid] = np.array(S, dtype=float)
            ids.append(sid)
        K = np.array(sc.intrinsics.K)
        images.append(DatasetImage(f"img{k}", K, np.array(sc.segments2d, dtype=float), ids,
                                   projection_from_pose(K, sc.pose)))
    return Dataset(name, segs, images, None if shared is None else np.array(shared))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class ImageResult:
    image: str
    method: str
    status: str  # ok | skipped | failed
    reason: str = ""
    pose: Pose | None = None
    error: PoseError | None = None


@dataclass
class DatasetEvaluation:
    dataset: str
    results: list

    def mean_errors(self, method):
        errs = [r.error.as_tuple() for r in self.results if r.method == method and r.error is not None]
        if not errs:
            return None
        return PoseError(*np.mean(errs, axis=0))

    def table(self):
        """Rows ``(method, evaluated, skipped, failed, mean dTheta, mean dT, mean dpi)``."""
        out = []
        for m in dict.fromkeys(r.method for r in self.results):
            rs = [r for r in self.results if r.method == m]
            e = self.mean_errors(m)
            vals = e.as_tuple() if e is not None else (float("nan"),) * 3
            out.append((m, sum(r.status == "ok" for r in rs), sum(r.status == "skipped" for r in rs),
                        sum(r.status == "failed" for r in rs), *vals))
        return out


def evaluate_dataset(ds, methods=("dlt_combined",), aor=False, solver_config=None, aor_config=None):
    """Estimate every image with every method and compare against ground truth.

    Images below a method's minimum correspondence count are skipped with the
    reason recorded. Without ground truth the pose is reported and the error
    left empty.
    """
    solver_config = solver_config or SolverConfig()
    aor_config = aor_config or AorConfig()
    results = []
    for method in [canonical_method(m) for m in methods]:
        for im in ds.images:
            corrs = ds.correspondences(im)
            try:
                check_minimum(corrs, method)
            except InsufficientCorrespondencesError as exc:
                results.append(ImageResult(im.id, method, "skipped", str(exc)))
                continue
            try:
                if aor:
                    pose, _ = aor_estimate(corrs, method, aor_config, solver_config)
                else:
                    pose, _ = estimate_pose(corrs, method, solver_config)
            except PnLError as exc:
                results.append(ImageResult(im.id, method, "failed", f"{type(exc).__name__}: {exc}"))
                continue
            err = None
            if im.gt_projection is not None:
                err = pose_error(im.ground_truth, pose, im.normalized_segments(), ds.lines3d(im))
            results.append(ImageResult(im.id, method, "ok", "", pose, err))
    return DatasetEvaluation(ds.name, results)
