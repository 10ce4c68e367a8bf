"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems (2),
bad input data (3) and numerical failures inside a solve (4).
"""


class TFDFError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(TFDFError, ValueError):
    exit_code = 2


class UnknownParameter(ConfigError):
    pass


class NonPositiveBandwidth(ConfigError):
    pass


class InvalidNeighborCount(ConfigError):
    pass


class DataError(TFDFError, ValueError):
    exit_code = 3


class MissingFile(DataError, FileNotFoundError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NonFiniteValue(DataError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class ZeroRow(DataError):
    def __init__(self, row):
        super().__init__(f"row {row} has zero norm; cosine similarity undefined")
        self.row = row


class DegenerateData(DataError):
    pass


class EmptyDomain(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class AsymmetricInput(DataError):
    pass


class NumericalError(TFDFError, ArithmeticError):
    exit_code = 4


class SingularSystem(NumericalError):
    pass


class NonFiniteIterate(NumericalError):
    """Raised when an Adam iterate contains NaN/Inf.

    ``history`` holds the diagnostics recorded up to the failing step.
    """

    def __init__(self, message, iteration=None, history=None):
        super().__init__(message)
        self.iteration = iteration
        self.history = history if history is not None else []
