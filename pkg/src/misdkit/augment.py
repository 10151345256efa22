"""Random-crop view generation and text-guided selection of normal/pseudo views."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UndefinedSimilarityError

AREA_MIN_DEFAULT = 0.2
AREA_MAX_DEFAULT = 1.0
ASPECT_MIN = 3.0 / 4.0
ASPECT_MAX = 4.0 / 3.0


@dataclass
class ViewSet:
    """One sample's crop-view embeddings plus its label."""

    sample_id: int
    embeddings: np.ndarray  # (k, d)
    label: int

    @property
    def k(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class SelectedPair:
    normal: np.ndarray
    pseudo: np.ndarray
    normal_index: int
    pseudo_index: int


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of (h, w, ch) to (out_h, out_w, ch)."""
    h, w = image.shape[:2]
    if (h, w) == (out_h, out_w):
        return image.astype(float, copy=True)
    # sample at pixel centers of the output grid mapped into the input grid
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    img = image.astype(float)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def sample_crop_rect(
    h: int,
    w: int,
    rng: np.random.Generator,
    area_min: float = AREA_MIN_DEFAULT,
    area_max: float = AREA_MAX_DEFAULT,
) -> tuple[int, int, int, int]:
    """(top, left, crop_h, crop_w) with area fraction in [area_min, area_max]
    and aspect in [3/4, 4/3], clamped to the image."""
    area = h * w * rng.uniform(area_min, area_max)
    aspect = rng.uniform(ASPECT_MIN, ASPECT_MAX)
    crop_w = int(round(np.sqrt(area * aspect)))
    crop_h = int(round(np.sqrt(area / aspect)))
    crop_w = max(1, min(crop_w, w))
    crop_h = max(1, min(crop_h, h))
    top = int(rng.integers(0, h - crop_h + 1))
    left = int(rng.integers(0, w - crop_w + 1))
    return top, left, crop_h, crop_w


def random_crops(
    image: np.ndarray,
    k: int,
    rng: np.random.Generator,
    out_h: int,
    out_w: int,
    area_min: float = AREA_MIN_DEFAULT,
    area_max: float = AREA_MAX_DEFAULT,
) -> np.ndarray:
    """k random resized crops of one image, stacked as (k, out_h, out_w, ch)."""
    if k < 2:
        raise ConfigurationError(f"need at least 2 crops, got {k}")
    h, w = image.shape[:2]
    crops = np.empty((k, out_h, out_w, image.shape[2]), dtype=float)
    for i in range(k):
        top, left, ch_, cw_ = sample_crop_rect(h, w, rng, area_min, area_max)
        crops[i] = bilinear_resize(image[top : top + ch_, left : left + cw_], out_h, out_w)
    return crops


def select_views(views: ViewSet, t_c: np.ndarray) -> SelectedPair:
    """Pick the crop most similar to the class feature as the normal view and
    the least similar as the pseudo view. Ties: lowest index for argmax,
    highest index for argmin, so a fully tied set still yields distinct views."""
    emb = views.embeddings
    norms = np.linalg.norm(emb, axis=1)
    t_norm = np.linalg.norm(t_c)
    if t_norm == 0.0 or np.any(norms == 0.0):
        raise UndefinedSimilarityError("zero-norm view or class feature")
    sims = (emb @ t_c) / (norms * t_norm)
    normal_index = int(np.argmax(sims))
    pseudo_index = int(len(sims) - 1 - np.argmin(sims[::-1]))
    return SelectedPair(
        normal=emb[normal_index],
        pseudo=emb[pseudo_index],
        normal_index=normal_index,
        pseudo_index=pseudo_index,
    )


def alternative_augment(
    image: np.ndarray, strategy: str, rng: np.random.Generator, noise_sigma: float = 0.1
) -> np.ndarray:
    """Cutout or gaussian-noise corruption, used only as an ablation axis."""
    out = image.astype(float, copy=True)
    h, w = image.shape[:2]
    if strategy == "cutout":
        side = h // 2
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        out[top : top + side, left : left + side] = 0.0
    elif strategy == "gaussian-noise":
        out += rng.normal(0.0, noise_sigma, size=image.shape)
    else:
        raise ConfigurationError(f"unknown augmentation strategy {strategy!r}")
    return out
