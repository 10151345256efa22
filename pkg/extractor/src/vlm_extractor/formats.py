"""Writers (and the merge-supporting reader) for the engine's file formats.

Implemented against the documented byte layouts, not against the engine's
code, so the two packages stay coupled only through the formats themselves:

- embeddings: magic "MISDEMB1", then little-endian u32 count, k, d, C,
  count*k*d float32 values (sample-major), count u32 labels, and C class
  names each prefixed with a u16 byte length (UTF-8).
- images: magic "MISDIMG1", u32 count, h, w, ch, C, float32 pixels, u32
  labels, then class names as above.
- scores: CSV with header ``confidence,predicted,label``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

EMB_MAGIC = b"MISDEMB1"
IMG_MAGIC = b"MISDIMG1"


@dataclass
class EmbeddingFile:
    embeddings: np.ndarray  # (count, k, d)
    labels: np.ndarray  # (count,)
    class_names: list[str]


def _pack_names(class_names: list[str]) -> bytes:
    parts = []
    for name in class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    return b"".join(parts)


def write_embedding_file(data: EmbeddingFile, path: str) -> None:
    count, k, d = data.embeddings.shape
    if len(data.labels) != count:
        raise FormatError(f"{count} embeddings but {len(data.labels)} labels")
    if not np.all(np.isfinite(data.embeddings)):
        raise FormatError("non-finite embedding values")
    blob = b"".join(
        [
            EMB_MAGIC,
            struct.pack("<IIII", count, k, d, len(data.class_names)),
            np.ascontiguousarray(data.embeddings, dtype="<f4").tobytes(),
            np.ascontiguousarray(data.labels, dtype="<u4").tobytes(),
            _pack_names(data.class_names),
        ]
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def read_embedding_file(path: str) -> EmbeddingFile:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic, not an embedding file")
    count, k, d, C = struct.unpack_from("<IIII", blob, 8)
    offset = 24
    payload = count * k * d * 4
    emb = np.frombuffer(blob[offset : offset + payload], dtype="<f4")
    if emb.size != count * k * d:
        raise FormatError(f"{path}: truncated payload")
    offset += payload
    labels = np.frombuffer(blob[offset : offset + count * 4], dtype="<u4")
    if labels.size != count:
        raise FormatError(f"{path}: truncated labels")
    offset += count * 4
    names = []
    for _ in range(C):
        if offset + 2 > len(blob):
            raise FormatError(f"{path}: truncated class names")
        (length,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        names.append(blob[offset : offset + length].decode("utf-8"))
        offset += length
    if offset != len(blob):
        raise FormatError(f"{path}: trailing bytes")
    return EmbeddingFile(
        embeddings=emb.reshape(count, k, d).astype(float),
        labels=labels.astype(int),
        class_names=names,
    )


def read_image_file(path: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """(images (N,H,W,Ch) floats in [0,1], labels, class names)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != IMG_MAGIC:
        raise FormatError(f"{path}: bad magic, not an image file")
    count, h, w, ch, C = struct.unpack_from("<IIIII", blob, 8)
    offset = 28
    payload = count * h * w * ch * 4
    pixels = np.frombuffer(blob[offset : offset + payload], dtype="<f4")
    if pixels.size != count * h * w * ch:
        raise FormatError(f"{path}: truncated pixels")
    offset += payload
    labels = np.frombuffer(blob[offset : offset + count * 4], dtype="<u4")
    if labels.size != count:
        raise FormatError(f"{path}: truncated labels")
    offset += count * 4
    names = []
    for _ in range(C):
        (length,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        names.append(blob[offset : offset + length].decode("utf-8"))
        offset += length
    return pixels.reshape(count, h, w, ch).astype(float), labels.astype(int), names


def write_scores_file(
    confidences: np.ndarray, predicted: np.ndarray, labels: np.ndarray, path: str
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("confidence,predicted,label\n")
        for c, p, y in zip(confidences, predicted, labels):
            fh.write(f"{float(c)!r},{int(p)},{int(y)}\n")


def merge_embedding_files(paths: list[str], out_path: str) -> EmbeddingFile:
    """Concatenate shard files written over disjoint slices of one dataset.
    All shards must agree on k, d and the class-name list."""
    if not paths:
        raise FormatError("nothing to merge")
    shards = [read_embedding_file(p) for p in paths]
    first = shards[0]
    for path, shard in zip(paths[1:], shards[1:]):
        if shard.embeddings.shape[1:] != first.embeddings.shape[1:]:
            raise FormatError(f"{path}: shard shape {shard.embeddings.shape[1:]} "
                              f"differs from {first.embeddings.shape[1:]}")
        if shard.class_names != first.class_names:
            raise FormatError(f"{path}: class names differ between shards")
    merged = EmbeddingFile(
        embeddings=np.concatenate([s.embeddings for s in shards]),
        labels=np.concatenate([s.labels for s in shards]),
        class_names=first.class_names,
    )
    write_embedding_file(merged, out_path)
    return merged
