"""Exception and warning types raised across the package."""


class OrderedForestError(Exception):
    """Base class for all package errors."""


class DataError(OrderedForestError, ValueError):
    pass


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    pass


class MissingValue(DataError):
    pass


class SingleClassOutcome(DataError):
    pass


class KTooLarge(DataError):
    pass


class EmptyData(DataError):
    pass


class ColumnMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class AllLeavesEmpty(OrderedForestError):
    """No tree holds estimation observations in the leaf containing the query."""


class NotInferenceReady(OrderedForestError):
    """The model was fit without the half-sample split needed for inference."""


class ZeroVarianceCovariate(OrderedForestError):
    pass


class NegativeVariance(OrderedForestError, ValueError):
    pass


class RankDeficient(OrderedForestError, ValueError):
    pass


class NonPositiveDefinite(OrderedForestError, ValueError):
    pass


class DegenerateDraw(OrderedForestError):
    """Simulated training sample kept missing a class after all redraws."""


class ClassAbsentFromFold(OrderedForestError):
    pass


class ClassTooSmall(UserWarning):
    pass


class NotConverged(UserWarning):
    pass
