"""Finite-difference verification of the analytic loss gradients.

The analytic side comes from loss_gradients (chain rule through cosine
similarity, softmax and the frozen text encoder); the oracle side is central
finite differences of the loss values themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .losses import BatchItem, ce_loss, loss_gradients, neg_loss, orth_loss
from .model import FrozenTextEncoder, PromptBank, init_prompt_bank

COMPONENTS = ("ce", "neg", "orth", "total")


@dataclass
class GradcheckResult:
    passed: bool
    worst_error: float
    worst_component: str
    worst_trial: int
    worst_coordinate: tuple
    trials: int
    tolerance: float


def _encode_features(bank: PromptBank, enc: FrozenTextEncoder) -> tuple[np.ndarray, np.ndarray]:
    cat = np.stack([enc.encode(bank.class_prompt(c)) for c in range(bank.C)])
    neg = np.stack([enc.encode(bank.negative_prompt(n)) for n in range(bank.n_n)])
    return cat, neg


def _component_values(
    bank: PromptBank,
    enc: FrozenTextEncoder,
    batch: list[BatchItem],
    T: float,
) -> np.ndarray:
    """Raw (ce, neg, orth) values; any weighted total is a fixed linear
    combination of these, so one evaluation serves all components."""
    cat, neg = _encode_features(bank, enc)
    ce = sum(ce_loss(item.normal, cat, item.label, T) for item in batch) / len(batch)
    ng = sum(
        sum(neg_loss(q, cat, neg, T) for q in item.pseudos) / len(item.pseudos)
        for item in batch
    ) / len(batch)
    return np.array([ce, ng, orth_loss(neg)])


def _analytic_component_grads(
    bank: PromptBank,
    enc: FrozenTextEncoder,
    batch: list[BatchItem],
    T: float,
    lambda_neg: float,
    lambda_orth: float,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-component gradients. Components are recovered from coefficient
    settings, which the gradient path treats exactly linearly."""
    g_ce, _ = loss_gradients(batch, bank, enc, T=T, lambda_neg=0.0, lambda_orth=0.0)
    g_cn, _ = loss_gradients(batch, bank, enc, T=T, lambda_neg=1.0, lambda_orth=0.0)
    g_co, _ = loss_gradients(batch, bank, enc, T=T, lambda_neg=0.0, lambda_orth=1.0)
    g_tot, _ = loss_gradients(batch, bank, enc, T=T, lambda_neg=lambda_neg, lambda_orth=lambda_orth)
    return {
        "ce": (g_ce.class_context, g_ce.negative_contexts),
        "neg": (
            g_cn.class_context - g_ce.class_context,
            g_cn.negative_contexts - g_ce.negative_contexts,
        ),
        "orth": (
            g_co.class_context - g_ce.class_context,
            g_co.negative_contexts - g_ce.negative_contexts,
        ),
        "total": (g_tot.class_context, g_tot.negative_contexts),
    }


def _fd_grad(value_fn, array: np.ndarray, step: float) -> np.ndarray:
    """Gradient of a vector-valued objective; returns shape (n_values, *array.shape)."""
    flat = array.reshape(-1)
    grads = None
    # Five-point stencil: O(step**4) truncation error, which keeps the
    # oracle accurate even where the encoder nonlinearity has high curvature.
    for i in range(flat.size):
        orig = flat[i]
        samples = []
        for offset in (-2.0, -1.0, 1.0, 2.0):
            flat[i] = orig + offset * step
            samples.append(np.asarray(value_fn(), dtype=float))
        flat[i] = orig
        m2, m1, p1, p2 = samples
        if grads is None:
            grads = np.zeros((m2.size,) + array.shape)
        grads.reshape(m2.size, -1)[:, i] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step)
    return grads


def _rel_error(analytic: np.ndarray, fd: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.abs(fd), floor)
    return float(np.max(np.abs(analytic - fd) / denom))


def run_gradcheck(
    trials: int = 100,
    seed: int = 0,
    d: int = 8,
    d_tok: int = 6,
    L: int = 4,
    C: int = 5,
    n_n: int = 3,
    T: float = 1.0,
    lambda_neg: float = 5.0,
    lambda_orth: float = 0.5,
    step: float = 1e-4,
    tolerance: float = 1e-4,
    batch_size: int = 2,
    perturbation: float = 0.0,
) -> GradcheckResult:
    """Compare analytic and finite-difference gradients over random
    instances. `perturbation` deliberately corrupts the analytic side and
    exists only so the harness itself can be tested."""
    if trials < 1:
        raise ConfigurationError(f"trials must be positive, got {trials}")
    worst = 0.0
    worst_component = ""
    worst_trial = -1
    worst_coord: tuple = ()

    for trial in range(trials):
        rng = np.random.default_rng([seed, 71, trial])
        bank = init_prompt_bank(C=C, L=L, n_n=n_n, d_tok=d_tok, seed=int(rng.integers(2**31)))
        # spread contexts out so similarities are not all near-identical
        bank.class_context = rng.standard_normal((L, d_tok)) * 0.5
        bank.negative_contexts = rng.standard_normal((n_n, L, d_tok)) * 0.5
        enc = FrozenTextEncoder.create(d=d, d_tok=d_tok, L=L, seed=int(rng.integers(2**31)))
        batch = [
            BatchItem(
                normal=rng.standard_normal(d),
                pseudos=rng.standard_normal((1, d)),
                label=int(rng.integers(C)),
            )
            for _ in range(batch_size)
        ]

        analytic = _analytic_component_grads(bank, enc, batch, T, lambda_neg, lambda_orth)
        value_fn = lambda: _component_values(bank, enc, batch, T)
        weights = np.array([1.0, lambda_neg, lambda_orth])
        for name, params in (
            ("class_context", bank.class_context),
            ("negative_contexts", bank.negative_contexts),
        ):
            raw = _fd_grad(value_fn, params, step)  # (3, *params.shape): ce, neg, orth
            fd_by_component = {
                "ce": raw[0],
                "neg": raw[1],
                "orth": raw[2],
                "total": np.tensordot(weights, raw, axes=1),
            }
            for component in COMPONENTS:
                # ce has no negative-context dependence, orth no class-context
                # dependence; comparing FD noise against an exact zero there
                # would only measure the stencil's roundoff floor.
                if component == "orth" and name == "class_context":
                    continue
                if component == "ce" and name == "negative_contexts":
                    continue
                a_grad = analytic[component][0 if name == "class_context" else 1]
                fd = fd_by_component[component]
                err = _rel_error(a_grad + perturbation, fd)
                if err > worst:
                    worst = err
                    worst_component = component
                    worst_trial = trial
                    bad = np.unravel_index(
                        np.argmax(np.abs(a_grad + perturbation - fd)), fd.shape
                    )
                    worst_coord = (name,) + tuple(int(b) for b in bad)

    return GradcheckResult(
        passed=worst < tolerance,
        worst_error=worst,
        worst_component=worst_component,
        worst_trial=worst_trial,
        worst_coordinate=worst_coord,
        trials=trials,
        tolerance=tolerance,
    )
