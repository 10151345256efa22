"""Exception hierarchy shared across the engine."""


class MisdError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(MisdError):
    """Invalid configuration value (nonpositive counts, bad coefficients, ...)."""


class DegenerateTaskError(ConfigurationError):
    """Task cannot be posed (fewer than 2 classes)."""


class ShapeError(MisdError):
    """Array shape or dimension mismatch."""


class DataError(MisdError):
    """Invalid data content (non-finite values, out-of-range labels, ...)."""


class UndefinedSimilarityError(MisdError):
    """Cosine similarity requested for a zero-norm vector."""


class UndefinedMetricError(MisdError):
    """Metric undefined for the given predictions (e.g. no errors present)."""


class FormatError(MisdError):
    """Malformed binary file (bad magic, bad structure)."""


class LengthError(FormatError):
    """File length disagrees with its header."""


class ParseError(MisdError):
    """Malformed text input; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CompatibilityError(MisdError):
    """Model and data disagree on dimensions or resolution."""
