"""Error hierarchy. Every error carries the exit code the CLI reports."""

EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_INTERNAL = 4


class TrackingError(Exception):
    exit_code = EXIT_INTERNAL


class InputError(TrackingError):
    """Unreadable, missing or malformed input files."""
    exit_code = EXIT_IO


class ConfigError(TrackingError):
    """Missing, unknown or invalid configuration key."""
    exit_code = EXIT_CONFIG

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class FrameOrderError(TrackingError):
    pass


class GridError(TrackingError):
    pass


class SingularSystemError(TrackingError):
    pass


class MissingOracleKeyError(InputError):
    pass


class FrameRangeError(InputError):
    pass
