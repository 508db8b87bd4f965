"""Exception hierarchy.

Every error raised by the library derives from :class:`LuvliError`, which is a
``ValueError`` so generic input-validation handlers keep working.
"""


class LuvliError(ValueError):
    pass


class NonPositiveDefinite(LuvliError):
    pass


class InvalidDimensions(LuvliError):
    pass


class AllNonPositive(LuvliError):
    """ReLU spatial mean requested on a heatmap with no positive pixel."""


class DimensionMismatch(LuvliError):
    pass


class NonDifferentiablePoint(LuvliError):
    """Laplacian loss evaluated at its cusp (residual equal to zero)."""


class Degenerate(LuvliError):
    pass


class MissingEyeCorners(LuvliError):
    pass


class NoVisibleLandmarks(LuvliError):
    pass


class EmptyInput(LuvliError):
    pass


class EmptyAfterFilter(LuvliError):
    pass


class MissingBbox(LuvliError):
    pass


class TooFewRecords(LuvliError):
    pass


class TooFewPoints(LuvliError):
    pass


class DataSyntaxError(LuvliError):
    pass


class SchemaError(LuvliError):
    pass


class CountMismatch(LuvliError):
    pass
