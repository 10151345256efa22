"""Few-shot misclassification detection engine."""

__version__ = "0.1.0"
