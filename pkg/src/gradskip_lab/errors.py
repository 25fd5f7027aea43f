"""Exception hierarchy shared by all modules."""


class GradSkipError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(GradSkipError, ValueError):
    """An argument is outside its admissible range or has the wrong shape."""


class ConfigError(GradSkipError, ValueError):
    """A run or experiment configuration is invalid."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [message])


class StateError(GradSkipError, RuntimeError):
    """An algorithm state is missing required fields."""


class ConstantsError(GradSkipError, ValueError):
    """Problem constants (condition numbers, smoothness) are inconsistent."""


class RateInvalidError(GradSkipError, ValueError):
    """A rate was requested for a step-size outside the guaranteed region."""


class OracleFailure(GradSkipError, RuntimeError):
    """A reference computation did not reach its accuracy target."""


class OracleCheckError(GradSkipError, AssertionError):
    """A numerical check of a proven identity or inequality failed."""


class EnumerationSizeError(GradSkipError, ValueError):
    """Exhaustive enumeration was requested for too many outcomes."""


class ParseError(GradSkipError, ValueError):
    """Malformed dataset text."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GenerationError(GradSkipError, ValueError):
    """A synthetic instance cannot realise the requested profile."""


class AggregationError(GradSkipError, ValueError):
    """Traces that cannot be summarised together."""
