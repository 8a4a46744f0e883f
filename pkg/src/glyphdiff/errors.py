"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation errors exit 2,
state errors exit 3, numerical aborts exit 4.
"""


class ValidationError(ValueError):
    """Caller passed data that violates a documented precondition."""


class ConfigurationError(ValidationError):
    """A config value is outside its allowed set (bad size, unknown key, ...)."""


class StateError(RuntimeError):
    """Operation invoked out of order or against incompatible artifacts."""


class NumericsError(ArithmeticError):
    """Training or inference produced non-finite values and was aborted."""
