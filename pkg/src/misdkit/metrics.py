"""Confidence scoring, the accept/flag decision rule, and the MisD metric
suite: ACC, FPR95, AURC, E-AURC, AUROC, AUPR-Success, AUPR-Error.

Tie handling is exact and oracle-checkable: AUROC gives half credit to tied
pairs, threshold metrics evaluate only at observed confidences, AUPR is the
non-interpolated average precision, and rank-based metrics order samples by a
canonical sort so every metric is invariant to input permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, UndefinedSimilarityError
from .losses import class_probabilities


@dataclass(frozen=True)
class ScoredPrediction:
    confidence: float
    predicted: int
    label: int

    @property
    def correct(self) -> bool:
        return self.predicted == self.label


@dataclass
class MisDReport:
    """Seven-number evaluation record. Percent scale except AURC/E-AURC,
    which are reported x1000. Ranking fields are None when undefined
    (e.g. no errors in the set)."""

    acc: float
    fpr95: float | None
    aurc: float | None
    e_aurc: float | None
    auroc: float | None
    aupr_success: float | None
    aupr_error: float | None

    _FIELDS = ("acc", "fpr95", "aurc", "e_aurc", "auroc", "aupr_success", "aupr_error")

    def to_text(self) -> str:
        lines = ["misdkit report"]
        for name in self._FIELDS:
            value = getattr(self, name)
            lines.append(f"{name} = {'n/a' if value is None else repr(value)}")
        return "\n".join(lines) + "\n"

    def to_csv_row(self) -> str:
        return ",".join(
            "n/a" if getattr(self, name) is None else repr(getattr(self, name))
            for name in self._FIELDS
        )

    @staticmethod
    def csv_header() -> str:
        return ",".join(MisDReport._FIELDS)


def predict(q: np.ndarray, category_features: np.ndarray, T: float = 1.0) -> tuple[float, int]:
    """(confidence, predicted class) via maximum softmax probability over
    cosine similarities. Ties go to the lowest class index."""
    probs = class_probabilities(q, category_features, T)
    predicted = int(np.argmax(probs))
    return float(probs[predicted]), predicted


def predict_batch(Q: np.ndarray, category_features: np.ndarray, T: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predict over rows of Q -> (confidences, predicted)."""
    cat = np.asarray(category_features, dtype=float)
    Q = np.asarray(Q, dtype=float)
    nq = np.linalg.norm(Q, axis=1)
    nc = np.linalg.norm(cat, axis=1)
    if np.any(nq == 0.0) or np.any(nc == 0.0):
        raise UndefinedSimilarityError("zero-norm embedding in prediction")
    sims = (Q @ cat.T) / np.outer(nq, nc) / T
    sims -= sims.max(axis=1, keepdims=True)
    e = np.exp(sims)
    probs = e / e.sum(axis=1, keepdims=True)
    predicted = probs.argmax(axis=1)
    return probs.max(axis=1), predicted


def decide(confidence: float, threshold: float) -> bool:
    """True = accept as correct (confidence >= threshold), False = flag."""
    return confidence >= threshold


def _canonical_order(preds: list[ScoredPrediction]) -> list[ScoredPrediction]:
    """Permutation-invariant order: confidence descending, correct before
    incorrect on ties, then (predicted, label) for full determinism."""
    return sorted(preds, key=lambda p: (-p.confidence, not p.correct, p.predicted, p.label))


def _split(preds: list[ScoredPrediction]) -> tuple[np.ndarray, np.ndarray]:
    conf = np.array([p.confidence for p in preds], dtype=float)
    correct = np.array([p.correct for p in preds], dtype=bool)
    return conf, correct


def _require_both_outcomes(correct: np.ndarray, metric: str) -> None:
    if correct.all() or not correct.any():
        raise UndefinedMetricError(
            f"{metric} undefined: need at least one correct and one incorrect prediction"
        )


def auroc(preds: list[ScoredPrediction]) -> float:
    """Probability a random correct sample outranks a random error, half
    credit for ties (Mann-Whitney rank statistic)."""
    conf, correct = _split(preds)
    _require_both_outcomes(correct, "AUROC")
    # average ranks (1-based) with ties sharing the mean rank
    order = np.argsort(conf, kind="stable")
    ranks = np.empty(len(conf), dtype=float)
    sorted_conf = conf[order]
    i = 0
    while i < len(conf):
        j = i
        while j + 1 < len(conf) and sorted_conf[j + 1] == sorted_conf[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = int(correct.sum())
    n_neg = len(conf) - n_pos
    u = ranks[correct].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def fpr_at_95_tpr(preds: list[ScoredPrediction], tpr_target: float = 0.95) -> float:
    """Minimum fraction of errors accepted over thresholds (taken at observed
    confidences) that keep at least 95% of correct predictions accepted."""
    conf, correct = _split(preds)
    _require_both_outcomes(correct, "FPR95")
    thresholds = np.unique(conf)
    n_pos = correct.sum()
    n_neg = (~correct).sum()
    best = 1.0
    for delta in thresholds:
        accepted = conf >= delta
        tpr = (accepted & correct).sum() / n_pos
        if tpr >= tpr_target:
            fpr = (accepted & ~correct).sum() / n_neg
            best = min(best, float(fpr))
    return best


def risk_coverage(preds: list[ScoredPrediction]) -> tuple[float, float]:
    """(AURC, E-AURC), raw scale. Risk at coverage i/n is the error rate of
    the i most confident samples; AURC is the mean over the n coverage
    points, E-AURC its excess over the optimal ordering."""
    if not preds:
        raise UndefinedMetricError("risk-coverage undefined on empty input")
    ordered = _canonical_order(preds)
    errors = np.array([not p.correct for p in ordered], dtype=float)
    n = len(errors)
    cum_err = np.cumsum(errors)
    risks = cum_err / np.arange(1, n + 1)
    aurc = float(risks.mean())
    n_err = int(errors.sum())
    opt_errors = np.concatenate([np.zeros(n - n_err), np.ones(n_err)])
    opt_risks = np.cumsum(opt_errors) / np.arange(1, n + 1)
    aurc_star = float(opt_risks.mean())
    return aurc, aurc - aurc_star


def aupr(preds: list[ScoredPrediction], positive: str = "success") -> float:
    """Non-interpolated average precision. positive='success' scores by
    confidence; positive='error' scores by negated confidence."""
    if positive not in ("success", "error"):
        raise UndefinedMetricError(f"unknown AUPR polarity {positive!r}")
    ordered = _canonical_order(preds)
    if positive == "error":
        ordered = ordered[::-1]
    is_pos = np.array(
        [p.correct if positive == "success" else not p.correct for p in ordered], dtype=bool
    )
    if not is_pos.any():
        raise UndefinedMetricError(f"AUPR-{positive} undefined: no positive samples")
    cum_pos = np.cumsum(is_pos)
    precisions = cum_pos[is_pos] / (np.flatnonzero(is_pos) + 1)
    return float(precisions.mean())


def accuracy(preds: list[ScoredPrediction]) -> float:
    _, correct = _split(preds)
    return float(correct.mean())


def full_report(preds: list[ScoredPrediction]) -> MisDReport:
    """All metrics at the paper's reporting scales: percent, except
    AURC/E-AURC which are x1000. Metrics undefined for the input (all
    correct or all wrong) come back as None."""
    if not preds:
        raise UndefinedMetricError("report undefined on empty input")
    acc = accuracy(preds) * 100.0
    _, correct = _split(preds)
    degenerate = correct.all() or not correct.any()
    aurc_raw, e_aurc_raw = risk_coverage(preds)
    return MisDReport(
        acc=acc,
        fpr95=None if degenerate else fpr_at_95_tpr(preds) * 100.0,
        aurc=aurc_raw * 1000.0,
        e_aurc=e_aurc_raw * 1000.0,
        auroc=None if degenerate else auroc(preds) * 100.0,
        aupr_success=None if not correct.any() else aupr(preds, "success") * 100.0,
        aupr_error=None if correct.all() else aupr(preds, "error") * 100.0,
    )


def binary_report(confidences: np.ndarray, correct: np.ndarray) -> MisDReport:
    """Report for the two-column (confidence, correct) scores variant:
    AUROC and FPR95 only, everything class-dependent marked n/a."""
    preds = [
        ScoredPrediction(confidence=float(c), predicted=0, label=0 if ok else 1)
        for c, ok in zip(confidences, correct)
    ]
    _, corr = _split(preds)
    _require_both_outcomes(corr, "binary scoring")
    return MisDReport(
        acc=float(corr.mean()) * 100.0,
        fpr95=fpr_at_95_tpr(preds) * 100.0,
        aurc=None,
        e_aurc=None,
        auroc=auroc(preds) * 100.0,
        aupr_success=None,
        aupr_error=None,
    )
