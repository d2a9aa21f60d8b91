"""Exception hierarchy shared by all pipeline stages."""


class GazeprintError(Exception):
    """Base class for every error raised by this package."""


class DataError(GazeprintError, ValueError):
    """Input data is unusable (CLI exit status 3)."""


class MalformedTrace(DataError):
    pass


class MalformedEvents(DataError):
    pass


class MalformedFile(DataError):
    """A grid, matrix or fixation file does not follow its format."""


class ShapeError(DataError):
    pass


class EmptyMap(DataError):
    """A density map carries no mass; the trial has no usable fixations."""


class DegenerateFit(DataError):
    pass


class DegenerateMatrix(DataError):
    pass


class UndefinedDirection(DataError):
    pass


class DegenerateGroundTruth(GazeprintError, ValueError):
    """Evaluation is impossible with the given labels (CLI exit status 4)."""
