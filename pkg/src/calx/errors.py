"""Exception hierarchy.

Every error raised on purpose by calx derives from :class:`CalxError`, which
is itself a :class:`ValueError` so callers that only care about bad input can
catch the builtin.
"""


class CalxError(ValueError):
    pass


# dataset
class MissingColumn(CalxError):
    pass


class UnknownCategoryCode(CalxError):
    pass


class NonNumericValue(CalxError):
    pass


class InsufficientRows(CalxError):
    pass


class SchemaError(CalxError):
    pass


class SchemaMismatch(CalxError):
    pass


# forest
class EmptyTraining(CalxError):
    pass


# conformal
class EmptyCalibration(CalxError):
    pass


class MissingSigma(CalxError):
    pass


class InvalidPercentiles(CalxError):
    pass


# vennabers
class EmptyInput(CalxError):
    pass


class NonBinaryLabel(CalxError):
    pass


# difficulty
class PayloadMismatch(CalxError):
    pass


class KTooLarge(CalxError):
    pass


# explainer
class UninitializedState(CalxError):
    pass


class NonFiniteThreshold(CalxError):
    pass


class OrderUnsupported(CalxError):
    pass


# cli / plotting
class ConflictingFlags(CalxError):
    pass


class IncompatiblePlotKind(CalxError):
    pass
