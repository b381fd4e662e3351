"""Exception hierarchy shared across the package."""


class FedScoreError(Exception):
    """Base class for all package errors."""


class ConfigError(FedScoreError, ValueError):
    """Invalid configuration or arguments."""


class DataError(FedScoreError, ValueError):
    """Input data does not conform to the schema or preconditions."""


class SingleClassError(DataError):
    """Outcome contains only one class where both are required."""


class NumericalError(FedScoreError, ArithmeticError):
    """An optimizer or numerical routine failed."""


class QuasiSeparationError(NumericalError):
    """Coefficients diverge because the outcome is (quasi-)separable."""


class ConvergenceError(NumericalError):
    """Iterative solver did not converge within its iteration budget."""


class ProtocolError(FedScoreError):
    """A federated payload is malformed or inconsistent with the session."""
