"""Training losses over cosine similarities and their exact gradients with
respect to the trainable prompt contexts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, UndefinedSimilarityError
from .model import FrozenTextEncoder, PromptBank


@dataclass
class LossBreakdown:
    ce: float
    neg: float
    orth: float
    lambda_neg: float
    lambda_orth: float

    @property
    def total(self) -> float:
        return self.ce + self.lambda_neg * self.neg + self.lambda_orth * self.orth


@dataclass
class BatchItem:
    """One training sample: the selected normal view, one or more pseudo
    views (more than one only in the local negative-optimization variants),
    and the class label."""

    normal: np.ndarray  # (d,)
    pseudos: np.ndarray  # (m, d), m >= 1
    label: int


@dataclass
class ContextGradients:
    class_context: np.ndarray  # (L, d_tok)
    negative_contexts: np.ndarray  # (n_n, L, d_tok)


def _norms(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1)
    if np.any(n == 0.0):
        raise UndefinedSimilarityError("zero-norm vector in similarity")
    return n


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("cosine similarity of a zero-norm vector")
    return float(a @ b / (na * nb))


def _sim_row(q: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Cosine similarities of q against each row of feats."""
    q = np.asarray(q, dtype=float)
    nq = np.linalg.norm(q)
    if nq == 0.0:
        raise UndefinedSimilarityError("zero-norm query embedding")
    return feats @ q / (_norms(feats) * nq)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _logsumexp(logits: np.ndarray) -> float:
    m = logits.max()
    return float(m + np.log(np.exp(logits - m).sum()))


def class_probabilities(q: np.ndarray, category_features: np.ndarray, T: float = 1.0) -> np.ndarray:
    """Softmax over cosine similarities of q to each class feature."""
    if T <= 0:
        raise ConfigurationError(f"temperature must be positive, got {T}")
    return _softmax(_sim_row(q, np.asarray(category_features, dtype=float)) / T)


def ce_loss(q: np.ndarray, category_features: np.ndarray, label: int, T: float = 1.0) -> float:
    C = len(category_features)
    if not 0 <= label < C:
        raise DataError(f"label {label} out of range [0, {C})")
    sims = _sim_row(q, np.asarray(category_features, dtype=float)) / T
    return _logsumexp(sims) - float(sims[label])


def neg_loss(
    q_pseudo: np.ndarray,
    category_features: np.ndarray,
    negative_features: np.ndarray,
    T: float = 1.0,
) -> float:
    """-log of the negative-prompt probability mass for a pseudo view,
    max-shifted for stability."""
    if T <= 0:
        raise ConfigurationError(f"temperature must be positive, got {T}")
    cat = np.asarray(category_features, dtype=float)
    neg = np.asarray(negative_features, dtype=float)
    cat_logits = _sim_row(q_pseudo, cat) / T
    neg_logits = _sim_row(q_pseudo, neg) / T
    all_logits = np.concatenate([cat_logits, neg_logits])
    return _logsumexp(all_logits) - _logsumexp(neg_logits)


def orth_loss(negative_features: np.ndarray) -> float:
    """Mean pairwise cosine similarity among negative features, diagonal
    self-pairs included."""
    feats = np.asarray(negative_features, dtype=float)
    unit = feats / _norms(feats)[:, None]
    n = len(feats)
    return float((unit @ unit.T).sum() / (n * n))


def total_loss(ce: float, neg: float, orth: float, lambda_neg: float, lambda_orth: float) -> LossBreakdown:
    if lambda_neg < 0 or lambda_orth < 0:
        raise ConfigurationError("loss coefficients must be nonnegative")
    return LossBreakdown(ce=ce, neg=neg, orth=orth, lambda_neg=lambda_neg, lambda_orth=lambda_orth)


def _grad_sims_wrt_feats(
    q: np.ndarray, feats: np.ndarray, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of sum_c upstream[c] * cos(q, feats[c]) with respect to feats.

    d cos(q, t)/dt = q/(|q||t|) - cos(q, t) * t/|t|^2, with q held constant.
    """
    nq = np.linalg.norm(q)
    nf = _norms(feats)
    sims = feats @ q / (nf * nq)
    return (upstream / nf)[:, None] * (q[None, :] / nq) - (
        (upstream * sims / (nf * nf))[:, None] * feats
    )


def batch_loss_and_feature_grads(
    batch: list[BatchItem],
    category_features: np.ndarray,
    negative_features: np.ndarray,
    T: float,
    lambda_neg: float,
    lambda_orth: float,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Mean total loss over the batch plus its gradients with respect to the
    encoded category and negative features."""
    if not batch:
        raise DataError("empty batch")
    if lambda_neg < 0 or lambda_orth < 0:
        raise ConfigurationError("loss coefficients must be nonnegative")
    cat = np.asarray(category_features, dtype=float)
    neg = np.asarray(negative_features, dtype=float)
    C, n_n = len(cat), len(neg)
    B = len(batch)

    grad_cat = np.zeros_like(cat)
    grad_neg = np.zeros_like(neg)
    ce_sum = 0.0
    neg_sum = 0.0

    for item in batch:
        # cross-entropy on the normal view
        sims = _sim_row(item.normal, cat) / T
        p = _softmax(sims)
        ce_sum += _logsumexp(sims) - float(sims[item.label])
        d_sims = p.copy()
        d_sims[item.label] -= 1.0
        grad_cat += _grad_sims_wrt_feats(item.normal, cat, d_sims / (T * B))

        # negative loss averaged over the sample's pseudo views
        m = len(item.pseudos)
        if m < 1:
            raise DataError("sample without pseudo views")
        if lambda_neg > 0:
            for q_ps in item.pseudos:
                cat_logits = _sim_row(q_ps, cat) / T
                neg_logits = _sim_row(q_ps, neg) / T
                all_logits = np.concatenate([cat_logits, neg_logits])
                neg_sum += (_logsumexp(all_logits) - _logsumexp(neg_logits)) / m
                p_all = _softmax(all_logits)
                p_negpart = _softmax(neg_logits)
                scale = lambda_neg / (T * B * m)
                grad_cat += _grad_sims_wrt_feats(q_ps, cat, p_all[:C] * scale)
                grad_neg += _grad_sims_wrt_feats(
                    q_ps, neg, (p_all[C:] - p_negpart) * scale
                )
        else:
            for q_ps in item.pseudos:
                neg_sum += neg_loss(q_ps, cat, neg, T) / m

    orth = orth_loss(neg)
    if lambda_orth > 0:
        # diagonal self-pairs are constant 1, zero gradient
        nf = _norms(neg)
        unit = neg / nf[:, None]
        sims = unit @ unit.T
        for i in range(n_n):
            upstream = np.full(n_n, 2.0 / (n_n * n_n))
            upstream[i] = 0.0
            grad_neg[i] += lambda_orth * (
                (upstream / (nf * nf[i])) @ neg
                - (upstream @ sims[i]) * neg[i] / (nf[i] * nf[i])
            )

    breakdown = LossBreakdown(
        ce=ce_sum / B,
        neg=neg_sum / B,
        orth=orth,
        lambda_neg=lambda_neg,
        lambda_orth=lambda_orth,
    )
    return breakdown, grad_cat, grad_neg


def loss_gradients(
    batch: list[BatchItem],
    bank: PromptBank,
    text_encoder: FrozenTextEncoder,
    T: float = 1.0,
    lambda_neg: float = 5.0,
    lambda_orth: float = 0.5,
) -> tuple[ContextGradients, LossBreakdown]:
    """Exact gradients of the mean total loss with respect to all trainable
    context vectors, chained through the frozen text encoder. Frozen class
    tokens and the null token get no update."""
    cat = np.stack([text_encoder.encode(bank.class_prompt(c)) for c in range(bank.C)])
    neg = np.stack([text_encoder.encode(bank.negative_prompt(n)) for n in range(bank.n_n)])
    breakdown, grad_cat, grad_neg = batch_loss_and_feature_grads(
        batch, cat, neg, T, lambda_neg, lambda_orth
    )
    ctx_grad = np.zeros_like(bank.class_context)
    for c in range(bank.C):
        ctx_grad += text_encoder.vjp(bank.class_prompt(c), grad_cat[c])[: bank.L]
    neg_ctx_grad = np.zeros_like(bank.negative_contexts)
    for n in range(bank.n_n):
        neg_ctx_grad[n] = text_encoder.vjp(bank.negative_prompt(n), grad_neg[n])[: bank.L]
    return ContextGradients(class_context=ctx_grad, negative_contexts=neg_ctx_grad), breakdown
