class SteinvarError(ValueError):
    """Base class for every error raised by the steinvar domain modules."""


class DataError(SteinvarError):
    """The supplied data cannot be used (exit code 2 at the CLI)."""


class ParameterError(SteinvarError):
    """A parameter lies outside the range an estimator or law is defined on."""


class NumericalError(SteinvarError):
    """A numerical routine failed or a computed property did not hold."""


class RankDeficient(DataError):
    pass


class DegenerateResponse(DataError):
    pass


class ZeroResidual(DataError):
    pass


class NonPositiveVariance(DataError):
    pass


class NonPositiveArgument(DataError):
    pass


class InconsistentXi(DataError):
    pass


class CsvFormatError(DataError):
    pass


class BadShrinkageOrder(ParameterError):
    pass


class ParameterRangeViolation(ParameterError):
    pass


class NotIntegrable(ParameterError):
    pass


class InvalidMixingLaw(ParameterError):
    pass


class DensityNotNormalized(ParameterError):
    pass


class ChallengerNotPhiForm(ParameterError):
    pass


class NonMonotonePhi(ParameterError):
    pass


class NoConvergence(NumericalError):
    pass


class SeriesDiverged(NumericalError):
    pass


class QuadratureBudgetExceeded(NumericalError):
    pass


class PropertyViolation(NumericalError):
    pass
