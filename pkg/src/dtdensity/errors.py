"""Exception hierarchy.

Two families: ``ValidationError`` for problems with user input (bad files,
bad arguments) and ``NumericalError`` for pathologies met while computing.
The CLI maps them to exit codes 1 and 2 respectively.
"""


class DTDensityError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(DTDensityError, ValueError):
    pass


class NumericalError(DTDensityError, ArithmeticError):
    pass


# -- input validation ---------------------------------------------------------

class EmptySample(ValidationError):
    pass


class ObservabilityViolation(ValidationError):
    """A record with x outside its truncation interval [u, v]."""

    def __init__(self, index, record):
        self.index = index
        self.record = tuple(record)
        u, v, x = self.record
        super().__init__(
            f"record {index}: x={x!r} is not inside [u, v]=[{u!r}, {v!r}]")


class NonFiniteValue(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class TooFewDistinctPoints(ValidationError):
    pass


class EmptyTruncationInterval(ValidationError):
    pass


# -- numerical failures -------------------------------------------------------

class SingularDenominator(NumericalError):
    pass


class DegenerateWeights(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class OverflowGuard(NumericalError):
    pass


class NullSpaceUnbounded(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class AcceptanceStall(NumericalError):
    pass


class TooManyFailures(NumericalError):
    pass
