"""Exception hierarchy shared by all modules."""


class MfaError(Exception):
    """Base class for errors raised by mfarestore."""


class ParseError(MfaError, ValueError):
    """An image or spec file could not be parsed.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DomainError(MfaError, ValueError):
    """An argument lies outside the domain of an operation."""


class DimensionError(MfaError, ValueError):
    """Two images that must share a shape do not."""


class FitError(MfaError, RuntimeError):
    """A model fit failed.  ``best`` holds the best parameters found, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class VerificationError(MfaError, ValueError):
    """A line-source verification could not be carried out as requested."""


class DivergenceError(MfaError, ArithmeticError):
    """Gradient descent produced a non-finite pixel."""

    def __init__(self, iteration, trace=None, reason="non-finite pixel"):
        super().__init__(f"{reason} at iteration {iteration}")
        self.iteration = iteration
        self.trace = trace
