"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class DataFormatError(ValueError):
    """Malformed input file. The message names the file and position."""


class DegenerateClusterError(ArithmeticError):
    """A cluster collapsed (zero soft frequency) or the embedding went non-finite."""

    def __init__(self, message, cluster=None, run=None):
        super().__init__(message)
        self.cluster = cluster
        self.run = run
