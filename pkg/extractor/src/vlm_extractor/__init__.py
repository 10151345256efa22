"""Embedding and zero-shot score exporter for the misclassification-
detection toolkit's file formats."""

from .backends import ClipBackend, StubBackend, make_backend
from .errors import ExtractorError, FormatError, JobError, ResolutionError
from .extract import extract_embeddings, load_dataset, zeroshot_scores
from .formats import (
    EmbeddingFile,
    merge_embedding_files,
    read_embedding_file,
    read_image_file,
    write_embedding_file,
    write_scores_file,
)
from .job import DEFAULT_TEMPLATE, ExtractionJob

__all__ = [
    "ClipBackend",
    "StubBackend",
    "make_backend",
    "ExtractorError",
    "FormatError",
    "JobError",
    "ResolutionError",
    "extract_embeddings",
    "load_dataset",
    "zeroshot_scores",
    "EmbeddingFile",
    "merge_embedding_files",
    "read_embedding_file",
    "read_image_file",
    "write_embedding_file",
    "write_scores_file",
    "DEFAULT_TEMPLATE",
    "ExtractionJob",
]
