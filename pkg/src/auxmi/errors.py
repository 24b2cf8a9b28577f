"""Exception hierarchy shared across the package."""


class AuxmiError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AuxmiError, ValueError):
    """Invalid argument, domain violation or malformed configuration."""


class NotPSDError(ConfigurationError):
    """Covariance matrix has an eigenvalue below the clamping tolerance."""


class InfeasibleCorrelationsError(ConfigurationError):
    """Requested correlations imply a non-positive residual variance."""


class InsufficientDataError(AuxmiError):
    """Too few (complete) observations for the requested computation."""


class SingularDesignError(AuxmiError):
    """Design matrix is rank deficient.

    Attributes
    ----------
    column : int
        Index of the first column found to be linearly dependent on others.
    """

    def __init__(self, column, message=None):
        self.column = int(column)
        super().__init__(message or f"design matrix is rank deficient at column {column}")


class DegenerateColumnError(AuxmiError):
    """A column is constant where a non-constant column is required."""

    def __init__(self, column, message=None):
        self.column = int(column)
        super().__init__(message or f"column {column} is constant")


class CalibrationError(AuxmiError):
    """Missingness intercept could not be bracketed."""


class ConvergenceError(AuxmiError):
    """Iterative solver failed to converge."""

    def __init__(self, message, lambda_index=None):
        self.lambda_index = lambda_index
        super().__init__(message)


class ImputationError(AuxmiError):
    """Imputation model could not be fitted or drawn from."""
