"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes): ``DataError`` for
problems with the inputs themselves and ``NumericError`` for failures of the
numerical procedures on otherwise valid inputs.
"""


class BpBetaError(Exception):
    """Base class for all package errors."""


class DataError(BpBetaError, ValueError):
    """Invalid input data or configuration."""


class NumericError(BpBetaError, ArithmeticError):
    """A numerical procedure failed on valid input."""


# data errors

class ShapeMismatch(DataError):
    pass


class MissingIntercept(DataError):
    pass


class ConstantColumn(DataError):
    pass


class RankDeficient(DataError):
    pass


class TooFewObservations(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class MissingColumn(DataError):
    def __init__(self, column: str):
        super().__init__(f"missing column: {column!r}")
        self.column = column


class NonNumericCell(DataError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"non-numeric cell at row {row}, column {column!r}: {value!r}")
        self.row = row
        self.column = column
        self.value = value


class ConfigError(DataError):
    pass


# numeric errors

class SingularMatrix(NumericError):
    pass


class NonPositiveVariance(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class NotConverged(NumericError):
    """A test statistic was requested from a fit that did not converge."""


class DegenerateFit(NumericError):
    pass


class NoRoot(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class SimulationAborted(NumericError):
    pass
