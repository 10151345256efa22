"""Prompt bank and frozen toy encoders.

The trainable state is a PromptBank: a shared class context, per-class frozen
name tokens, and independent negative contexts. Both encoders are frozen,
deterministic maps generated from a seed; the text encoder additionally
exposes a vector-Jacobian product so prompts can be trained through it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DataError,
    DegenerateTaskError,
    FormatError,
    ShapeError,
)

CONTEXT_INIT_SCALE = 0.02

# labels for derived rng substreams, so every consumer of one master seed
# draws from an independent stream
_STREAM_CONTEXT = 11
_STREAM_NEGATIVE = 12
_STREAM_VOCAB = 13
_STREAM_TEXT_ENC = 21
_STREAM_VISION_ENC = 22


def _name_key(name: str) -> int:
    """Stable 63-bit integer key for a class name."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class PromptBank:
    """All prompt parameters. Only the contexts are trainable."""

    class_context: np.ndarray  # (L, d_tok), trainable
    class_tokens: np.ndarray  # (C, d_tok), frozen
    negative_contexts: np.ndarray  # (n_n, L, d_tok), trainable
    null_token: np.ndarray  # (d_tok,), frozen class slot of negative prompts
    class_names: list[str] = field(default_factory=list)

    @property
    def L(self) -> int:
        return self.class_context.shape[0]

    @property
    def C(self) -> int:
        return self.class_tokens.shape[0]

    @property
    def n_n(self) -> int:
        return self.negative_contexts.shape[0]

    @property
    def d_tok(self) -> int:
        return self.class_context.shape[1]

    def class_prompt(self, c: int) -> np.ndarray:
        """Token sequence (L+1, d_tok) for class c: shared context + name token."""
        return np.vstack([self.class_context, self.class_tokens[c][None, :]])

    def negative_prompt(self, n: int) -> np.ndarray:
        """Token sequence (L+1, d_tok) for negative prompt n, null class slot."""
        return np.vstack([self.negative_contexts[n], self.null_token[None, :]])

    def copy(self) -> "PromptBank":
        return PromptBank(
            class_context=self.class_context.copy(),
            class_tokens=self.class_tokens.copy(),
            negative_contexts=self.negative_contexts.copy(),
            null_token=self.null_token.copy(),
            class_names=list(self.class_names),
        )


def init_prompt_bank(
    C: int,
    L: int,
    n_n: int,
    d_tok: int,
    seed: int,
    class_names: list[str] | None = None,
) -> PromptBank:
    """Seeded initialization. Contexts are small noise; class tokens come from
    a frozen vocabulary keyed by class name, so relabeling permutes them."""
    if C < 2:
        raise DegenerateTaskError(f"need at least 2 classes, got {C}")
    if L < 1 or n_n < 1 or d_tok < 1:
        raise ConfigurationError(f"L, n_n, d_tok must be positive, got {L}, {n_n}, {d_tok}")
    if class_names is None:
        class_names = [f"class_{c}" for c in range(C)]
    if len(class_names) != C:
        raise ConfigurationError(f"expected {C} class names, got {len(class_names)}")

    ctx_rng = np.random.default_rng([seed, _STREAM_CONTEXT])
    neg_rng = np.random.default_rng([seed, _STREAM_NEGATIVE])
    class_context = CONTEXT_INIT_SCALE * ctx_rng.standard_normal((L, d_tok))
    negative_contexts = CONTEXT_INIT_SCALE * neg_rng.standard_normal((n_n, L, d_tok))
    class_tokens = np.stack(
        [
            np.random.default_rng([seed, _STREAM_VOCAB, _name_key(name)]).standard_normal(d_tok)
            for name in class_names
        ]
    )
    return PromptBank(
        class_context=class_context,
        class_tokens=class_tokens,
        negative_contexts=negative_contexts,
        null_token=np.zeros(d_tok),
        class_names=list(class_names),
    )


class FrozenTextEncoder:
    """Frozen map over a (L+1)-token prompt: an affine term over the whole
    prompt plus a bilinear context-times-class-token interaction, squashed by
    tanh. The bilinear term is what gives the shared context class-specific
    leverage; a purely affine map shifts every class's pre-activation
    identically and cannot be tuned into a classifier."""

    # interaction gain: large enough that 30 epochs at lr 2e-3 move the
    # similarities materially, small enough that tanh stays unsaturated
    BILINEAR_GAIN = 30.0

    def __init__(
        self,
        weight: np.ndarray,
        bias: np.ndarray,
        bilinear: np.ndarray,  # (d, d_tok, L*d_tok)
        L: int,
        d_tok: int,
        seed: int,
    ):
        d = bias.shape[0]
        if weight.shape != (d, (L + 1) * d_tok):
            raise ShapeError(f"weight shape {weight.shape} != ({d}, {(L + 1) * d_tok})")
        if bilinear.shape != (d, d_tok, L * d_tok):
            raise ShapeError(f"bilinear shape {bilinear.shape} != ({d}, {d_tok}, {L * d_tok})")
        self.weight = weight
        self.bias = bias
        self.bilinear = bilinear
        self.L = L
        self.d_tok = d_tok
        self.d = d
        self.seed = seed

    @classmethod
    def create(cls, d: int, d_tok: int, L: int, seed: int) -> "FrozenTextEncoder":
        rng = np.random.default_rng([seed, _STREAM_TEXT_ENC])
        fan_in = (L + 1) * d_tok
        weight = rng.standard_normal((d, fan_in)) / np.sqrt(fan_in)
        bias = 0.1 * rng.standard_normal(d)
        bilinear = (
            cls.BILINEAR_GAIN
            * rng.standard_normal((d, d_tok, L * d_tok))
            / np.sqrt(L * d_tok)
        )
        return cls(weight, bias, bilinear, L, d_tok, seed)

    def _flatten(self, prompt: np.ndarray) -> np.ndarray:
        prompt = np.asarray(prompt, dtype=float)
        if prompt.shape != (self.L + 1, self.d_tok):
            raise ShapeError(
                f"prompt shape {prompt.shape} != ({self.L + 1}, {self.d_tok})"
            )
        return prompt.reshape(-1)

    def _preactivation(self, x: np.ndarray) -> np.ndarray:
        ctx = x[: self.L * self.d_tok]
        cls_tok = x[self.L * self.d_tok :]
        mixed = self.bilinear @ ctx  # (d, d_tok)
        return self.weight @ x + mixed @ cls_tok + self.bias

    def encode(self, prompt: np.ndarray) -> np.ndarray:
        """tanh of the affine-plus-bilinear pre-activation, shape (d,)."""
        return np.tanh(self._preactivation(self._flatten(prompt)))

    def vjp(self, prompt: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """J(prompt)^T @ cotangent, shape (L+1, d_tok)."""
        cotangent = np.asarray(cotangent, dtype=float)
        if cotangent.shape != (self.d,):
            raise ShapeError(f"cotangent shape {cotangent.shape} != ({self.d},)")
        x = self._flatten(prompt)
        ctx = x[: self.L * self.d_tok]
        cls_tok = x[self.L * self.d_tok :]
        mixed = self.bilinear @ ctx
        y = np.tanh(self.weight @ x + mixed @ cls_tok + self.bias)
        dz = cotangent * (1.0 - y * y)
        grad_flat = self.weight.T @ dz
        grad_flat[: self.L * self.d_tok] += np.einsum("dkl,d,k->l", self.bilinear, dz, cls_tok)
        grad_flat[self.L * self.d_tok :] += mixed.T @ dz
        return grad_flat.reshape(self.L + 1, self.d_tok)


class FrozenVisionEncoder:
    """Non-overlapping patches through one shared frozen linear projection
    and a per-patch tanh, mean-pooled. Images are centered by their global
    mean first, so the constant background offset common to every image does
    not dominate cosine similarities. The projection is shared across patch
    positions to keep class appearance, not blob position, in the feature."""

    def __init__(
        self,
        projection: np.ndarray,  # (d, patch*patch*channels)
        bias: np.ndarray,  # (d,)
        patch: int,
        height: int,
        width: int,
        channels: int,
        seed: int,
    ):
        if height % patch or width % patch:
            raise ConfigurationError(f"resolution {height}x{width} not divisible by patch {patch}")
        if projection.shape != (bias.shape[0], patch * patch * channels):
            raise ShapeError(f"bad projection shape {projection.shape}")
        self.projection = projection
        self.bias = bias
        self.patch = patch
        self.height = height
        self.width = width
        self.channels = channels
        self.d = bias.shape[0]
        self.seed = seed

    @classmethod
    def create(
        cls,
        d: int,
        patch: int = 8,
        height: int = 32,
        width: int = 32,
        channels: int = 3,
        seed: int = 0,
    ) -> "FrozenVisionEncoder":
        rng = np.random.default_rng([seed, _STREAM_VISION_ENC])
        fan_in = patch * patch * channels
        projection = rng.standard_normal((d, fan_in)) / np.sqrt(fan_in)
        bias = np.zeros(d)
        return cls(projection, bias, patch, height, width, channels, seed)

    def _patchify(self, images: np.ndarray) -> np.ndarray:
        """(N, H, W, Ch) -> (N, n_patches, patch*patch*Ch)."""
        n, h, w, ch = images.shape
        p = self.patch
        x = images.reshape(n, h // p, p, w // p, p, ch)
        x = x.transpose(0, 1, 3, 2, 4, 5)
        return x.reshape(n, (h // p) * (w // p), p * p * ch)

    def encode_batch(self, images: np.ndarray) -> np.ndarray:
        """(N, H, W, Ch) -> (N, d)."""
        images = np.asarray(images, dtype=float)
        if images.ndim != 4 or images.shape[1:] != (self.height, self.width, self.channels):
            raise ShapeError(
                f"image batch shape {images.shape} != (N, {self.height}, {self.width}, {self.channels})"
            )
        if not np.all(np.isfinite(images)):
            raise DataError("non-finite pixel values")
        centered = images - images.mean(axis=(1, 2, 3), keepdims=True)
        patches = self._patchify(centered)
        per_patch = np.tanh(np.einsum("npf,df->npd", patches, self.projection) + self.bias)
        return per_patch.mean(axis=1)

    def encode(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=float)
        if image.shape != (self.height, self.width, self.channels):
            raise ShapeError(
                f"image shape {image.shape} != ({self.height}, {self.width}, {self.channels})"
            )
        return self.encode_batch(image[None])[0]


@dataclass
class ModelBundle:
    """Everything needed to evaluate: bank, encoders and the temperature."""

    bank: PromptBank
    text_encoder: FrozenTextEncoder
    vision_encoder: FrozenVisionEncoder
    temperature: float = 1.0

    def category_features(self) -> np.ndarray:
        """(C, d) encoded class prompts t_c."""
        return np.stack(
            [self.text_encoder.encode(self.bank.class_prompt(c)) for c in range(self.bank.C)]
        )

    def negative_features(self) -> np.ndarray:
        """(n_n, d) encoded negative prompts."""
        return np.stack(
            [self.text_encoder.encode(self.bank.negative_prompt(n)) for n in range(self.bank.n_n)]
        )


MODEL_FORMAT_VERSION = 1


def _vec(a: np.ndarray) -> list:
    return np.asarray(a, dtype=float).tolist()


def save_model(bundle: ModelBundle, path: str) -> None:
    """Human-readable model file; floats round-trip at full double precision."""
    bank = bundle.bank
    doc = {
        "format": "misdkit-model",
        "version": MODEL_FORMAT_VERSION,
        "d": bundle.text_encoder.d,
        "d_tok": bank.d_tok,
        "L": bank.L,
        "C": bank.C,
        "n_n": bank.n_n,
        "temperature": bundle.temperature,
        "text_encoder_seed": bundle.text_encoder.seed,
        "vision_encoder_seed": bundle.vision_encoder.seed,
        "vision": {
            "patch": bundle.vision_encoder.patch,
            "height": bundle.vision_encoder.height,
            "width": bundle.vision_encoder.width,
            "channels": bundle.vision_encoder.channels,
        },
        "class_names": bank.class_names,
        "class_context": _vec(bank.class_context),
        "class_tokens": _vec(bank.class_tokens),
        "negative_contexts": _vec(bank.negative_contexts),
        "null_token": _vec(bank.null_token),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not a model file: {exc}") from exc
    if doc.get("format") != "misdkit-model":
        raise FormatError("not a misdkit model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model version {doc.get('version')}")
    bank = PromptBank(
        class_context=np.array(doc["class_context"], dtype=float),
        class_tokens=np.array(doc["class_tokens"], dtype=float),
        negative_contexts=np.array(doc["negative_contexts"], dtype=float),
        null_token=np.array(doc["null_token"], dtype=float),
        class_names=list(doc["class_names"]),
    )
    text_encoder = FrozenTextEncoder.create(
        d=doc["d"], d_tok=doc["d_tok"], L=doc["L"], seed=doc["text_encoder_seed"]
    )
    v = doc["vision"]
    vision_encoder = FrozenVisionEncoder.create(
        d=doc["d"],
        patch=v["patch"],
        height=v["height"],
        width=v["width"],
        channels=v["channels"],
        seed=doc["vision_encoder_seed"],
    )
    return ModelBundle(
        bank=bank,
        text_encoder=text_encoder,
        vision_encoder=vision_encoder,
        temperature=float(doc["temperature"]),
    )
