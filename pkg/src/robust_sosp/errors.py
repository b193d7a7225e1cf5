"""Exception hierarchy shared across the package."""


class RobustSospError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(RobustSospError):
    pass


class NonFinite(RobustSospError):
    pass


class EpsOutOfRange(RobustSospError):
    pass


class EmptyInput(RobustSospError):
    pass


class OracleFailure(RobustSospError):
    pass


class RegionViolation(RobustSospError):
    pass


class IterCapError(RobustSospError):
    pass


class BadSpectrum(RobustSospError):
    pass


class EpsTooSmall(RobustSospError):
    pass


class RequiresNoiseless(RobustSospError):
    pass


class ConfigInvalid(RobustSospError):
    pass
