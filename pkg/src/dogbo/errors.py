"""Exception types shared across the package."""


class DogBoError(Exception):
    """Base class for all package errors."""


class InvalidArgument(DogBoError, ValueError):
    pass


class NumericalFailure(DogBoError, ArithmeticError):
    pass


class Exhausted(DogBoError):
    """Every candidate in the set has already been evaluated."""


class FormatError(DogBoError):
    """A persisted file is truncated or malformed."""


class VersionError(DogBoError):
    """A persisted file has an incompatible schema version or fingerprint."""


class ConfigError(DogBoError):
    pass
