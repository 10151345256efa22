"""File formats and synthetic data.

Binary layouts (little-endian):
  embeddings  magic "MISDEMB1", u32 count, u32 k, u32 d, u32 C,
              count*k*d float32 (sample-major, view-major, dim-minor),
              count u32 labels, C u16-length-prefixed UTF-8 class names.
  images      magic "MISDIMG1", u32 count, u32 H, u32 W, u32 Ch, u32 C,
              count*H*W*Ch float32 pixels, count u32 labels, class names
              as above.

Scores files are CSV with header ``confidence,predicted,label`` or the
two-column OOD variant ``confidence,correct``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .augment import random_crops
from .errors import (
    ConfigurationError,
    DegenerateTaskError,
    DataError,
    FormatError,
    LengthError,
    ParseError,
)
from .metrics import ScoredPrediction
from .model import FrozenVisionEncoder

EMB_MAGIC = b"MISDEMB1"
IMG_MAGIC = b"MISDIMG1"

_STREAM_SYNTH = 31
_STREAM_SYNTH_CLASS = 32
_STREAM_EMBED = 33


@dataclass
class ImageDataset:
    images: np.ndarray  # (count, H, W, Ch) in [0, 1]
    labels: np.ndarray  # (count,) int
    class_names: list[str]

    @property
    def count(self) -> int:
        return self.images.shape[0]


@dataclass
class EmbeddingDataset:
    embeddings: np.ndarray  # (count, k, d)
    labels: np.ndarray
    class_names: list[str]
    provenance: str = "toy-encoder"

    @property
    def count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def k(self) -> int:
        return self.embeddings.shape[1]

    @property
    def d(self) -> int:
        return self.embeddings.shape[2]


@dataclass
class SynthGeometry:
    height: int = 32
    width: int = 32
    channels: int = 3
    blob_side: int = 16
    background_amplitude: float = 0.25
    # class patterns: a flat class-keyed color plus fixed high-frequency
    # texture; contrast low enough that the task is not trivially separable
    color_low: float = 0.3
    color_high: float = 0.9
    texture_amplitude: float = 0.35
    # per-sample blob opacity over the background; low-visibility samples are
    # the hard ones, so difficulty tracks how background-dominated an image is
    visibility_low: float = 0.25


def gen_synth(
    C: int,
    per_class: int,
    seed: int,
    geometry: SynthGeometry | None = None,
    pattern_seed: int = 0,
) -> ImageDataset:
    """Noise backgrounds with one class-keyed procedural blob per image at a
    random position. Deterministic per (seed, pattern_seed). Class patterns
    are keyed by pattern_seed alone, so datasets generated with different
    sample seeds (train/validation splits) share the same classes."""
    if C < 2:
        raise DegenerateTaskError(f"need at least 2 classes, got {C}")
    if per_class < 1:
        raise ConfigurationError(f"per_class must be positive, got {per_class}")
    geo = geometry or SynthGeometry()
    h, w, ch, s = geo.height, geo.width, geo.channels, geo.blob_side

    patterns = np.empty((C, s, s, ch))
    for c in range(C):
        crng = np.random.default_rng([pattern_seed, _STREAM_SYNTH_CLASS, c])
        color = crng.uniform(geo.color_low, geo.color_high, size=ch)
        texture = crng.uniform(-1.0, 1.0, size=(s, s, ch)) * geo.texture_amplitude
        patterns[c] = np.clip(color[None, None, :] + texture, 0.0, 1.0)

    rng = np.random.default_rng([seed, _STREAM_SYNTH])
    count = C * per_class
    images = rng.uniform(0.0, geo.background_amplitude, size=(count, h, w, ch))
    labels = np.repeat(np.arange(C), per_class)
    for i in range(count):
        top = int(rng.integers(0, h - s + 1))
        left = int(rng.integers(0, w - s + 1))
        alpha = rng.uniform(geo.visibility_low, 1.0)
        region = images[i, top : top + s, left : left + s]
        images[i, top : top + s, left : left + s] = (
            alpha * patterns[labels[i]] + (1.0 - alpha) * region
        )
    return ImageDataset(
        images=images,
        labels=labels,
        class_names=[f"class_{c}" for c in range(C)],
    )


def embed_dataset(
    dataset: ImageDataset,
    encoder: FrozenVisionEncoder,
    k: int,
    seed: int,
    area_min: float = 0.2,
    area_max: float = 1.0,
) -> EmbeddingDataset:
    """k crop embeddings per image (k=1: the full uncropped image, the
    evaluation path). Each sample draws from its own rng substream."""
    if k < 1:
        raise ConfigurationError(f"k must be positive, got {k}")
    count = dataset.count
    if k == 1:
        emb = encoder.encode_batch(dataset.images)[:, None, :]
    else:
        emb = np.empty((count, k, encoder.d))
        for i in range(count):
            rng = np.random.default_rng([seed, _STREAM_EMBED, i])
            crops = random_crops(
                dataset.images[i], k, rng, encoder.height, encoder.width, area_min, area_max
            )
            emb[i] = encoder.encode_batch(crops)
    return EmbeddingDataset(
        embeddings=emb,
        labels=dataset.labels.copy(),
        class_names=list(dataset.class_names),
        provenance="toy-encoder",
    )


def _write_names(parts: list[bytes], names: list[str]) -> None:
    for name in names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)


class _Cursor:
    """Sequential reader that raises LengthError instead of over-reading."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise LengthError(f"{self.path}: truncated (needed {n} more bytes)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise LengthError(
                f"{self.path}: {len(self.data) - self.pos} trailing bytes beyond header-implied length"
            )


def _read_names(cur: _Cursor, C: int) -> list[str]:
    names = []
    for _ in range(C):
        n = cur.u16()
        names.append(cur.take(n).decode("utf-8"))
    return names


def write_embeddings(dataset: EmbeddingDataset, path: str) -> None:
    if not np.all(np.isfinite(dataset.embeddings)):
        raise DataError("non-finite embedding values")
    parts = [
        EMB_MAGIC,
        struct.pack("<IIII", dataset.count, dataset.k, dataset.d, len(dataset.class_names)),
        np.ascontiguousarray(dataset.embeddings, dtype="<f4").tobytes(),
        np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes(),
    ]
    _write_names(parts, dataset.class_names)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_embeddings(path: str) -> EmbeddingDataset:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read(), path)
    if cur.take(8) != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic, not an embedding file")
    count, k, d, C = cur.u32(), cur.u32(), cur.u32(), cur.u32()
    emb = np.frombuffer(cur.take(count * k * d * 4), dtype="<f4").reshape(count, k, d)
    labels = np.frombuffer(cur.take(count * 4), dtype="<u4").astype(int)
    names = _read_names(cur, C)
    cur.finish()
    if not np.all(np.isfinite(emb)):
        raise DataError(f"{path}: non-finite embedding values")
    if count and labels.max() >= C:
        raise DataError(f"{path}: label {labels.max()} out of range for {C} classes")
    return EmbeddingDataset(
        embeddings=emb.astype(float), labels=labels, class_names=names, provenance="external"
    )


def write_images(dataset: ImageDataset, path: str) -> None:
    count, h, w, ch = dataset.images.shape
    parts = [
        IMG_MAGIC,
        struct.pack("<IIIII", count, h, w, ch, len(dataset.class_names)),
        np.ascontiguousarray(dataset.images, dtype="<f4").tobytes(),
        np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes(),
    ]
    _write_names(parts, dataset.class_names)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_images(path: str) -> ImageDataset:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read(), path)
    if cur.take(8) != IMG_MAGIC:
        raise FormatError(f"{path}: bad magic, not an image file")
    count, h, w, ch, C = (cur.u32() for _ in range(5))
    pixels = np.frombuffer(cur.take(count * h * w * ch * 4), dtype="<f4")
    images = pixels.reshape(count, h, w, ch).astype(float)
    labels = np.frombuffer(cur.take(count * 4), dtype="<u4").astype(int)
    names = _read_names(cur, C)
    cur.finish()
    if not np.all(np.isfinite(images)):
        raise DataError(f"{path}: non-finite pixels")
    if count and labels.max() >= C:
        raise DataError(f"{path}: label {labels.max()} out of range for {C} classes")
    return ImageDataset(images=images, labels=labels, class_names=names)


@dataclass
class ScoreSet:
    """Parsed scores file: either full (confidence, predicted, label) rows or
    the two-column binary (confidence, correct) variant."""

    predictions: list[ScoredPrediction] = field(default_factory=list)
    binary_confidences: np.ndarray | None = None
    binary_correct: np.ndarray | None = None

    @property
    def is_binary(self) -> bool:
        return self.binary_confidences is not None


def write_scores(preds: list[ScoredPrediction], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("confidence,predicted,label\n")
        for p in preds:
            fh.write(f"{p.confidence!r},{p.predicted},{p.label}\n")


def _parse_confidence(text: str, lineno: int) -> float:
    try:
        conf = float(text)
    except ValueError:
        raise ParseError(f"non-numeric confidence {text!r}", lineno) from None
    if not (0.0 < conf <= 1.0) or not np.isfinite(conf):
        raise ParseError(f"confidence {conf} outside (0, 1]", lineno)
    return conf


def read_scores(path: str) -> ScoreSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty scores file, missing header", 1)
    header = [col.strip() for col in rows[0]]
    if header == ["confidence", "predicted", "label"]:
        binary = False
    elif header == ["confidence", "correct"]:
        binary = True
    else:
        raise ParseError(f"unrecognized header {','.join(header)!r}", 1)

    preds: list[ScoredPrediction] = []
    confs: list[float] = []
    flags: list[bool] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        conf = _parse_confidence(row[0].strip(), lineno)
        if binary:
            flag = row[1].strip()
            if flag not in ("0", "1"):
                raise ParseError(f"correct flag must be 0 or 1, got {flag!r}", lineno)
            confs.append(conf)
            flags.append(flag == "1")
        else:
            try:
                predicted = int(row[1].strip())
                label = int(row[2].strip())
            except ValueError:
                raise ParseError(f"non-integer class field in {row!r}", lineno) from None
            if predicted < 0 or label < 0:
                raise ParseError("class indices must be nonnegative", lineno)
            preds.append(ScoredPrediction(confidence=conf, predicted=predicted, label=label))
    if binary:
        return ScoreSet(
            binary_confidences=np.array(confs, dtype=float),
            binary_correct=np.array(flags, dtype=bool),
        )
    return ScoreSet(predictions=preds)
