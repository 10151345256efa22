"""Embedding backends.

A backend maps a batch of images (N, H, W, Ch) floats in [0, 1] and a list
of prompt strings to raw (un-normalized) embedding matrices.  Two are
provided: a deterministic stub useful for tests and offline pipelines, and
a CLIP backend loaded lazily through ``transformers``.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np

from .errors import ResolutionError


class Backend(Protocol):
    def embed_images(self, images: np.ndarray) -> np.ndarray: ...

    def embed_texts(self, prompts: list[str]) -> np.ndarray: ...


class StubBackend:
    """Deterministic fake encoder.

    Images hash their pixel bytes into an RNG seed; texts hash the prompt
    string.  Identical inputs therefore always produce identical vectors,
    which is all the downstream formats and tests need.
    """

    def __init__(self, dim: int = 32):
        self.dim = dim

    def _vector(self, blob: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)

    def embed_images(self, images: np.ndarray) -> np.ndarray:
        quantized = np.round(np.asarray(images, dtype=np.float64) * 255.0)
        return np.stack([self._vector(img.astype("<f8").tobytes()) for img in quantized])

    def embed_texts(self, prompts: list[str]) -> np.ndarray:
        return np.stack([self._vector(p.encode("utf-8")) for p in prompts])


class ClipBackend:
    """CLIP via transformers; imported lazily so the package works without it."""

    def __init__(self, model_name: str, device: str = "cpu", batch_size: int = 64):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ResolutionError(
                "the CLIP backend needs torch and transformers installed"
            ) from exc
        try:
            self.model = CLIPModel.from_pretrained(model_name).to(device).eval()
            self.processor = CLIPProcessor.from_pretrained(model_name)
        except Exception as exc:
            raise ResolutionError(f"could not load model {model_name!r}: {exc}") from exc
        self.device = device
        self.batch_size = batch_size

    def embed_images(self, images: np.ndarray) -> np.ndarray:
        import torch

        chunks = []
        pixel_uint8 = np.clip(np.asarray(images) * 255.0, 0, 255).astype(np.uint8)
        if pixel_uint8.shape[-1] == 1:
            pixel_uint8 = np.repeat(pixel_uint8, 3, axis=-1)
        for start in range(0, len(pixel_uint8), self.batch_size):
            batch = list(pixel_uint8[start : start + self.batch_size])
            inputs = self.processor(images=batch, return_tensors="pt").to(self.device)
            with torch.no_grad():
                feats = self.model.get_image_features(**inputs)
            chunks.append(feats.cpu().double().numpy())
        return np.concatenate(chunks)

    def embed_texts(self, prompts: list[str]) -> np.ndarray:
        import torch

        inputs = self.processor(
            text=prompts, return_tensors="pt", padding=True, truncation=True
        ).to(self.device)
        with torch.no_grad():
            feats = self.model.get_text_features(**inputs)
        return feats.cpu().double().numpy()


def make_backend(model: str, device: str = "cpu", batch_size: int = 64) -> Backend:
    if model == "stub" or model.startswith("stub:"):
        dim = int(model.split(":", 1)[1]) if ":" in model else 32
        return StubBackend(dim=dim)
    return ClipBackend(model, device=device, batch_size=batch_size)
