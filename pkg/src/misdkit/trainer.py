"""Full training loop: shot sampling, pseudo-view selection, momentum SGD on
the prompt contexts under a cosine learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .augment import ViewSet, random_crops, select_views
from .data_io import EmbeddingDataset, ImageDataset, embed_dataset
from .errors import ConfigurationError, DataError
from .losses import BatchItem, loss_gradients
from .model import (
    FrozenTextEncoder,
    FrozenVisionEncoder,
    ModelBundle,
    init_prompt_bank,
    _name_key,
)

_STREAM_SHOTS = 41
_STREAM_CROPS = 42

TEXT_ENCODER_SEED_OFFSET = 1001
VISION_ENCODER_SEED_OFFSET = 1002


@dataclass
class TrainConfig:
    shots: int = 16
    epochs: int = 30
    base_lr: float = 2e-3
    momentum: float = 0.9
    lambda_neg: float = 5.0
    lambda_orth: float = 0.5
    T: float = 1.0
    L: int = 16
    n_n: int = 4
    k: int = 8
    crop_schedule: str = "adaptive"  # or "static"
    crop_area_min: float = 0.2
    crop_area_max: float = 1.0
    neg_mode: str = "global"  # "global" | "local" | "global+local"
    d: int = 32
    d_tok: int = 16
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.base_lr <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.base_lr}")
        if self.shots < 1:
            raise ConfigurationError(f"shots must be positive, got {self.shots}")
        if self.T <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.T}")
        if self.lambda_neg < 0 or self.lambda_orth < 0:
            raise ConfigurationError("loss coefficients must be nonnegative")
        if self.crop_schedule not in ("adaptive", "static"):
            raise ConfigurationError(f"unknown crop schedule {self.crop_schedule!r}")
        if self.neg_mode not in ("global", "local", "global+local"):
            raise ConfigurationError(f"unknown negative mode {self.neg_mode!r}")
        if self.k < 2:
            raise ConfigurationError(f"need at least 2 crops, got {self.k}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceEntry:
    epoch: int
    lr: float
    ce: float
    neg: float
    orth: float
    total: float


@dataclass
class TrainedModel:
    bundle: ModelBundle
    config: TrainConfig
    trace: list[TraceEntry] = field(default_factory=list)
    category_features: np.ndarray | None = None
    negative_features: np.ndarray | None = None


def cosine_lr(epoch: int, epochs: int, base_lr: float) -> float:
    if not 0 <= epoch < epochs:
        raise ConfigurationError(f"epoch {epoch} outside [0, {epochs})")
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * epoch / epochs))


def sample_shots(labels: np.ndarray, shots: int, seed: int, class_names: list[str]) -> np.ndarray:
    """Stratified seeded draw of `shots` indices per class, without
    replacement. Streams are keyed per class name so relabelings resample
    identically."""
    chosen: list[np.ndarray] = []
    for c, name in enumerate(class_names):
        pool = np.flatnonzero(labels == c)
        if len(pool) < shots:
            raise DataError(
                f"class {name!r} has {len(pool)} samples, need {shots}"
            )
        rng = np.random.default_rng([seed, _STREAM_SHOTS, _name_key(name)])
        chosen.append(rng.choice(pool, size=shots, replace=False))
    return np.concatenate(chosen)


def _views_for_epoch(
    dataset: ImageDataset | EmbeddingDataset,
    indices: np.ndarray,
    encoder: FrozenVisionEncoder | None,
    config: TrainConfig,
    epoch_key: int,
) -> list[ViewSet]:
    """ViewSets for the selected samples. Image datasets get fresh crops per
    epoch key; embedding datasets reuse their precomputed views."""
    if isinstance(dataset, EmbeddingDataset):
        if dataset.k < 2:
            raise DataError("training needs at least 2 views per sample")
        return [
            ViewSet(sample_id=int(i), embeddings=dataset.embeddings[i], label=int(dataset.labels[i]))
            for i in indices
        ]
    assert encoder is not None
    out = []
    for i in indices:
        rng = np.random.default_rng([config.seed, _STREAM_CROPS, epoch_key, int(i)])
        crops = random_crops(
            dataset.images[i],
            config.k,
            rng,
            encoder.height,
            encoder.width,
            config.crop_area_min,
            config.crop_area_max,
        )
        out.append(
            ViewSet(sample_id=int(i), embeddings=encoder.encode_batch(crops), label=int(dataset.labels[i]))
        )
    return out


def _build_batch(views: list[ViewSet], cat_features: np.ndarray, neg_mode: str) -> list[BatchItem]:
    batch = []
    for vs in views:
        pair = select_views(vs, cat_features[vs.label])
        if neg_mode == "global":
            pseudos = pair.pseudo[None, :]
        else:
            locals_ = np.delete(vs.embeddings, pair.normal_index, axis=0)
            if neg_mode == "local":
                pseudos = locals_
            else:  # global+local: the selected pseudo plus all other non-normal views
                pseudos = np.vstack([pair.pseudo[None, :], locals_])
        batch.append(BatchItem(normal=pair.normal, pseudos=pseudos, label=vs.label))
    return batch


def train(dataset: ImageDataset | EmbeddingDataset, config: TrainConfig) -> TrainedModel:
    """Run the full loop and return the trained prompts with cached features
    and a per-epoch loss trace. Deterministic per config.seed."""
    config.validate()
    C = len(dataset.class_names)
    if C < 2:
        raise DataError("dataset must have at least 2 classes")

    if isinstance(dataset, ImageDataset):
        h, w, ch = dataset.images.shape[1:]
        vision = FrozenVisionEncoder.create(
            d=config.d,
            height=h,
            width=w,
            channels=ch,
            seed=config.seed + VISION_ENCODER_SEED_OFFSET,
        )
        d = config.d
    else:
        vision = FrozenVisionEncoder.create(
            d=dataset.d, seed=config.seed + VISION_ENCODER_SEED_OFFSET
        )
        d = dataset.d

    text = FrozenTextEncoder.create(
        d=d, d_tok=config.d_tok, L=config.L, seed=config.seed + TEXT_ENCODER_SEED_OFFSET
    )
    bank = init_prompt_bank(
        C=C,
        L=config.L,
        n_n=config.n_n,
        d_tok=config.d_tok,
        seed=config.seed,
        class_names=dataset.class_names,
    )

    indices = sample_shots(dataset.labels, config.shots, config.seed, dataset.class_names)

    vel_ctx = np.zeros_like(bank.class_context)
    vel_neg = np.zeros_like(bank.negative_contexts)
    trace: list[TraceEntry] = []
    static_views: list[ViewSet] | None = None
    static_cat: np.ndarray | None = None

    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config.epochs, config.base_lr)
        cat_features = np.stack([text.encode(bank.class_prompt(c)) for c in range(C)])
        if config.crop_schedule == "static":
            if static_views is None:
                static_views = _views_for_epoch(dataset, indices, vision, config, epoch_key=0)
                static_cat = cat_features
            views, select_cat = static_views, static_cat
        else:
            views = _views_for_epoch(dataset, indices, vision, config, epoch_key=epoch)
            select_cat = cat_features

        batch = _build_batch(views, select_cat, config.neg_mode)
        grads, breakdown = loss_gradients(
            batch, bank, text, T=config.T, lambda_neg=config.lambda_neg, lambda_orth=config.lambda_orth
        )
        vel_ctx = config.momentum * vel_ctx - lr * grads.class_context
        vel_neg = config.momentum * vel_neg - lr * grads.negative_contexts
        bank.class_context = bank.class_context + vel_ctx
        bank.negative_contexts = bank.negative_contexts + vel_neg
        trace.append(
            TraceEntry(
                epoch=epoch, lr=float(lr), ce=breakdown.ce, neg=breakdown.neg,
                orth=breakdown.orth, total=breakdown.total,
            )
        )

    bundle = ModelBundle(bank=bank, text_encoder=text, vision_encoder=vision, temperature=config.T)
    return TrainedModel(
        bundle=bundle,
        config=config,
        trace=trace,
        category_features=bundle.category_features(),
        negative_features=bundle.negative_features(),
    )


def write_trace(trace: list[TraceEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,ce,neg,orth,total\n")
        for t in trace:
            fh.write(f"{t.epoch},{t.lr!r},{t.ce!r},{t.neg!r},{t.orth!r},{t.total!r}\n")
