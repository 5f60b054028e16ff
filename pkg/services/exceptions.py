
class ServiceError(Exception):
    """Base class for all service errors"""
    pass


class NotFoundError(ServiceError):
    """Raised when a config or input file is missing"""
    pass


class ContractViolationError(ServiceError, ValueError):
    """Raised when an operation's precondition does not hold"""
    pass


class ConfigError(ServiceError):
    """Raised when an experiment config cannot be loaded or validated"""
    pass


class FileAccessError(ServiceError):
    """Raised when an output path escapes the output directory"""
    pass


class DivergenceError(ServiceError):
    """Raised when the optimizer produces a non-finite loss"""

    def __init__(self, message: str, last_finite_step: int):
        super().__init__(message)
        self.last_finite_step = last_finite_step
