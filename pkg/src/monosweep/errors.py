"""Exception types shared across the package."""


class MonosweepError(Exception):
    """Base class for all package-specific errors."""


class BehindCamera(MonosweepError):
    """A warped 3D point landed at or behind the camera plane."""


class InvalidConfig(MonosweepError):
    """A configuration value or input shape violates a precondition."""


class ConfigError(MonosweepError):
    """A config file or flag could not be parsed or validated."""


class DegenerateFit(MonosweepError):
    """Least-squares fit is singular (e.g. constant regressor)."""


class EmptySelection(MonosweepError):
    """A pixel selection step produced no pixels."""


class EmptyMask(MonosweepError):
    """An operation requiring valid pixels received an empty mask."""


class EmptyCloud(MonosweepError):
    """Point-cloud fusion or evaluation received/produced no points."""


class MalformedPly(MonosweepError):
    """A PLY file does not match the supported layout."""
