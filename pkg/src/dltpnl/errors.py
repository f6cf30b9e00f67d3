"""Exception and warning types raised by the pose estimation toolkit."""


class PnLError(ValueError):
    """Base class for all toolkit errors."""


class DegenerateInputError(PnLError):
    """Input primitives do not define the requested object (coincident points, zero vectors)."""


class InsufficientCorrespondencesError(PnLError):
    """Fewer correspondences than the estimation method needs."""


class NoPlausibleSolutionError(PnLError):
    """Every pose candidate places most of the scene behind the camera."""


class GeodesicAmbiguityError(PnLError):
    """Relative rotation of exactly pi; the rotation logarithm is not unique."""


class NonConvergenceError(PnLError):
    """An iterative procedure hit its iteration cap."""


class InsufficientInliersError(InsufficientCorrespondencesError):
    """Outlier rejection left too few correspondences."""


class DatasetError(PnLError):
    """Base class for dataset loading problems."""


class DatasetParseError(DatasetError):
    def __init__(self, path, lineno, reason):
        self.path = path
        self.lineno = lineno
        self.reason = reason
        super().__init__(f"{path}:{lineno}: {reason}")


class DatasetValidationError(DatasetError):
    pass


class RankDeficiencyWarning(UserWarning):
    """The measurement matrix has a (near) multi-dimensional nullspace."""


class RotationAmbiguityWarning(UserWarning):
    """Two singular values coincide, so the nearest rotation is not unique."""


class ReconciliationWarning(UserWarning):
    """Point and line blocks of a reverted combined matrix disagree beyond tolerance."""
