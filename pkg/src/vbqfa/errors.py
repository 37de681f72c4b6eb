"""Exception hierarchy; the CLI maps each class to an exit code."""


class QfaError(Exception):
    exit_code = 1


class InputError(QfaError, ValueError):
    """Malformed or invalid input data."""

    exit_code = 2


class NumericalError(QfaError, ArithmeticError):
    """An update produced a non-finite or non-positive-definite quantity."""

    exit_code = 3

    def __init__(self, message, *, iteration=None, block=None):
        self.iteration = iteration
        self.block = block
        ctx = []
        if iteration is not None:
            ctx.append(f"iteration {iteration}")
        if block is not None:
            ctx.append(f"block {block}")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)


class ConfigError(QfaError, ValueError):
    """Invalid estimator or run configuration."""

    exit_code = 4
