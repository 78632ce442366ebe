"""Exception hierarchy shared by every module."""


class SchmidtLabError(Exception):
    """Base class for all library errors."""


class ConfigurationError(SchmidtLabError, ValueError):
    """Invalid configuration: non-prime place, modulus sharing a factor with S, bad flag."""


class DomainError(SchmidtLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class RangeError(SchmidtLabError, ValueError):
    """A loop bound, table range or overflow guard was exceeded."""


class InsufficientDataError(SchmidtLabError, ValueError):
    pass


class CalibrationError(SchmidtLabError, RuntimeError):
    pass


class UnsupportedRegionError(SchmidtLabError, ValueError):
    pass


class OracleUnavailableError(SchmidtLabError, RuntimeError):
    """The brute-force oracle refused to run at this size."""
