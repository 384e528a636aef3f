"""Exception hierarchy; each class carries the CLI exit code for its error class."""


class PimoError(Exception):
    exit_code = 1


class FlagError(PimoError, ValueError):
    exit_code = 2


class IngestionError(PimoError):
    exit_code = 3


class NumericalError(PimoError, ArithmeticError):
    """Covariance not positive semidefinite beyond the roundoff tolerance."""

    exit_code = 4


class DegenerateDataError(PimoError, ValueError):
    exit_code = 5
