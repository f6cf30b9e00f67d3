"""Camera pose from 3D/2D line correspondences by direct linear transformation."""

from .geometry import CameraIntrinsics, Pose
from .solvers import CorrespondenceSet, SolverConfig, estimate_pose

__version__ = "0.1.0"

__all__ = ["CameraIntrinsics", "CorrespondenceSet", "Pose", "SolverConfig", "estimate_pose"]
