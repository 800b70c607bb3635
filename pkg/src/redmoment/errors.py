"""Exception types shared across the package."""


class RedMomentError(Exception):
    """Base class for all package errors."""


class ParameterError(RedMomentError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ValidationError(RedMomentError, ValueError):
    """An operator fails a structural check (Hermiticity, trace, PSD, shape).

    ``reason`` is a short machine-readable tag such as ``"not_hermitian"``.
    """

    def __init__(self, reason, message=None):
        self.reason = reason
        super().__init__(message or reason)


class UnavailableError(RedMomentError):
    """A quantity is not available on the requested path (e.g. Tr rho^3 from data)."""


class ConstructionError(RedMomentError):
    """Building an inversion map failed its own correctness certificate."""


class InsufficientBudgetError(RedMomentError):
    """The sample budget is below what a certification plan requires."""

    def __init__(self, required, provided):
        self.required = required
        self.provided = provided
        super().__init__(f"sample budget {provided} below required {required}")
