"""Exception types shared across the package.

Each class carries a short ``code`` used by the command-line tool as a
machine-greppable reason and to select the process exit status.
"""


class GevreError(Exception):
    code = "ERROR"
    exit_status = 2


class ParameterDomainError(GevreError, ValueError):
    """Invalid distribution parameters or arguments outside their domain."""

    code = "DOMAIN"
    exit_status = 3


class DataError(GevreError, ValueError):
    """Malformed or insufficient input data."""

    code = "DATA"
    exit_status = 2


class ModelError(GevreError, ValueError):
    """Model specification inconsistent with the data or state."""

    code = "MODEL"
    exit_status = 2


class InitializationError(GevreError, RuntimeError):
    """No starting state with a finite log-posterior could be found."""

    code = "INIT"
    exit_status = 3


class SummaryError(GevreError, ValueError):
    code = "SUMMARY"
    exit_status = 3


class ReportError(GevreError, ValueError):
    code = "REPORT"
    exit_status = 2
