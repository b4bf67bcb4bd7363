class SapError(Exception):
    """Base error. `exit_code` is what the cli returns when this escapes a command."""

    exit_code = 1


class CheckFailure(SapError):
    exit_code = 1


class ConfigError(SapError):
    exit_code = 2


class DataError(SapError):
    exit_code = 3


class SolverError(SapError):
    exit_code = 4


class NonConvergenceError(SolverError):
    pass


class SingularSylvesterError(SolverError):
    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair
