"""Exception hierarchy shared by all stochavg modules."""


class StochAvgError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(StochAvgError):
    """Invalid user configuration (CLI exit code 2)."""


class NumericalError(StochAvgError):
    """A numerical stage could not complete (CLI exit code 3)."""


# torus / cell problem
class MeanNotZero(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class DimensionMismatch(NumericalError):
    pass


# systems
class OriginSingularity(NumericalError):
    pass


class CriticalPointCountMismatch(NumericalError):
    pass


class OnSeparatrix(NumericalError):
    pass


class ModelKindMismatch(NumericalError):
    pass


# averaging
class FDStepInvalid(NumericalError):
    pass


class DomainError(NumericalError):
    pass


# simulation
class StepRuleViolation(NumericalError):
    pass


class OutOfGrid(NumericalError):
    pass


# analysis
class PathsTooShort(NumericalError):
    pass


class CheckpointMismatch(ConfigError):
    pass


class InsufficientHits(NumericalError):
    pass
