"""Exception hierarchy shared across the package."""


class Pose2PressError(Exception):
    """Base class for all library errors."""


class ShapeError(Pose2PressError):
    """Operands have incompatible or malformed shapes."""


class ConfigError(Pose2PressError):
    """A configuration value violates its documented constraints."""


class DataError(Pose2PressError):
    """Input data is malformed, inconsistent, or unusable."""


class NumericalError(Pose2PressError):
    """A computation produced non-finite values or cannot proceed numerically."""
