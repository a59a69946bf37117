"""Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI maps it to:
1 for bad input, 2 for convergence/numeric trouble, 3 for anything else.
"""


class SubsvrError(Exception):
    """Base class; unexpected internal failures exit with code 3."""

    exit_code = 3


class InputError(SubsvrError):
    """Invalid user input: bad files, shapes, or configuration values."""

    exit_code = 1


class NumericError(SubsvrError):
    """Numerically degenerate state (singular solve, saturated smoother)."""

    exit_code = 2


class ConvergenceError(SubsvrError):
    """Optimizer hit its iteration cap; carries the best iterate found."""

    exit_code = 2

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model
