"""Exception hierarchy.

Every error raised on bad input derives from :class:`CalibrationError`, which
is itself a ``ValueError`` so callers that already catch ``ValueError`` keep
working.
"""


class CalibrationError(ValueError):
    """Base class for all input, data and schema errors."""


class NonRectangular(CalibrationError):
    pass


class RowSumZero(CalibrationError):
    pass


class OutOfRange(CalibrationError):
    pass


class NonFinite(CalibrationError):
    pass


class EmptyInput(CalibrationError):
    pass


class KOutOfRange(CalibrationError):
    pass


class BinsExceedPoints(CalibrationError):
    pass


class ClassCountMismatch(CalibrationError):
    pass


class InvalidHyperparameters(CalibrationError):
    pass


class NotOnSimplex(CalibrationError):
    pass


class NoBinFound(CalibrationError):
    """Grid assignment found no bin. Indicates a bug, never a data problem."""


class TooFewPoints(CalibrationError):
    pass


class NonUnitDirection(CalibrationError):
    pass


class UnsupportedPredictor(CalibrationError):
    pass


class LabelOutOfRange(CalibrationError):
    pass


class MalformedHeader(CalibrationError):
    pass


class RaggedRow(CalibrationError):
    pass


class SchemaViolation(CalibrationError):
    pass


class VersionMismatch(SchemaViolation):
    pass


class SparseClassWarning(UserWarning):
    """A class (or rank/class cell) had no calibration rows; identity used."""
