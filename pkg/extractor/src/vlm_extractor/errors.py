"""Exception types for the extractor."""


class ExtractorError(Exception):
    """Base class for all extractor failures."""


class ResolutionError(ExtractorError):
    """A model or dataset could not be located or loaded."""


class FormatError(ExtractorError):
    """An input file is not in a recognized format."""


class JobError(ExtractorError):
    """An ExtractionJob is internally inconsistent."""
