"""Exception hierarchy shared across the package."""


class RRAMError(Exception):
    """Base class for every error raised by rramsec."""


class DomainError(RRAMError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ConfigurationError(RRAMError, ValueError):
    """A crossbar, drive or experiment configuration cannot be used."""


class ValidationError(RRAMError, ValueError):
    """Loaded data violates a documented bound."""


class ParseError(RRAMError, ValueError):
    """A file could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StateError(RRAMError, RuntimeError):
    """An operation's precondition on crossbar state does not hold."""


class SearchError(RRAMError, RuntimeError):
    """A bracketing search could not be set up."""


class ConvergenceError(RRAMError, RuntimeError):
    """A calibration fit did not reach an acceptable residual."""
