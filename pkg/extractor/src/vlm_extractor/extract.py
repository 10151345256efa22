"""Extraction pipelines: dataset loading, embedding export, zero-shot scores."""

from __future__ import annotations

import os

import numpy as np

from .backends import Backend
from .errors import JobError, ResolutionError
from .formats import (
    EmbeddingFile,
    read_image_file,
    write_embedding_file,
    write_scores_file,
)
from .job import ExtractionJob

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


def load_dataset(job: ExtractionJob) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Return images (N, H, W, Ch) in [0, 1], integer labels, class names."""
    path = job.dataset
    if os.path.isfile(path):
        images, labels, names = read_image_file(path)
    elif os.path.isdir(path):
        images, labels, names = _load_image_folder(path)
    else:
        raise ResolutionError(f"dataset not found: {path}")
    if job.class_names:
        if len(job.class_names) != len(names):
            raise JobError(
                f"job lists {len(job.class_names)} class names but the "
                f"dataset has {len(names)} classes"
            )
        names = list(job.class_names)
    return images, labels, names


def _load_image_folder(root: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    from PIL import Image

    names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    if not names:
        raise ResolutionError(f"{root}: no class subdirectories found")
    images, labels = [], []
    for label, name in enumerate(names):
        class_dir = os.path.join(root, name)
        for fname in sorted(os.listdir(class_dir)):
            if os.path.splitext(fname)[1].lower() not in IMAGE_EXTENSIONS:
                continue
            with Image.open(os.path.join(class_dir, fname)) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
            images.append(arr)
            labels.append(label)
    if not images:
        raise ResolutionError(f"{root}: no images found")
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise JobError(f"images have mixed shapes: {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=int), names


def _l2_normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return matrix / np.maximum(norms, 1e-12)


def _embed_in_batches(backend: Backend, images: np.ndarray, batch_size: int) -> np.ndarray:
    chunks = [
        backend.embed_images(images[start : start + batch_size])
        for start in range(0, len(images), batch_size)
    ]
    return np.concatenate(chunks)


def extract_embeddings(job: ExtractionJob, backend: Backend) -> EmbeddingFile:
    """Embed every image and write a single-view (k=1) embedding file."""
    job.validate()
    if not job.embeddings_out:
        raise JobError("an embeddings output path is required")
    images, labels, names = load_dataset(job)
    features = _l2_normalize(_embed_in_batches(backend, images, job.batch_size))
    data = EmbeddingFile(
        embeddings=features[:, None, :], labels=labels, class_names=names
    )
    write_embedding_file(data, job.embeddings_out)
    return data


def zeroshot_scores(job: ExtractionJob, backend: Backend) -> dict:
    """Score every image against the class prompts and write a scores file.

    Confidence is the maximum softmax probability over classes at the
    configured logit scale.  Returns a small summary dict with ``accuracy``
    counted here, independently of any downstream evaluation.
    """
    job.validate()
    if not job.scores_out:
        raise JobError("a scores output path is required")
    images, labels, names = load_dataset(job)
    image_feats = _l2_normalize(_embed_in_batches(backend, images, job.batch_size))
    text_feats = _l2_normalize(backend.embed_texts([job.prompt_for(n) for n in names]))
    logits = job.logit_scale * (image_feats @ text_feats.T)
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    predicted = probs.argmax(axis=1)
    confidences = probs.max(axis=1)
    write_scores_file(confidences, predicted, labels, job.scores_out)
    correct = int(np.sum(predicted == labels))
    return {
        "count": len(labels),
        "correct": correct,
        "accuracy": 100.0 * correct / len(labels),
    }
