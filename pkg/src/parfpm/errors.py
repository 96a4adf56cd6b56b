"""Exception hierarchy; CLI exit codes hang off these classes."""


class FpmError(Exception):
    exit_code = 1


class ConfigError(FpmError, ValueError):
    """Invalid configuration or violated invariant."""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the domain of an operation (e.g. LED off the grid)."""


class DataError(FpmError):
    """Malformed, truncated or incomplete data on disk or in memory."""

    exit_code = 3


class UnsafeLagError(FpmError):
    """Pipeline lag below the computed safe minimum."""

    exit_code = 4

    def __init__(self, lag: int, minimum: int):
        super().__init__(f"lag {lag} is below the minimum safe lag {minimum}; "
                         f"pass an unsafe override to run anyway")
        self.lag = lag
        self.minimum = minimum

    def __reduce__(self):
        # keeps the error intact when raised inside a worker process
        return type(self), (self.lag, self.minimum)
