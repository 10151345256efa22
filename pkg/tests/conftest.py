"""Shared brute-force oracles and random-instance generators.

Every ranking metric here is computed the slow, obviously-correct way
(pairwise counting, explicit threshold scans, per-rank enumeration) so the
fast implementations in misdkit.metrics can be checked against them.
"""

from __future__ import annotations

import numpy as np

from misdkit.metrics import ScoredPrediction


def canonical(preds: list[ScoredPrediction]) -> list[ScoredPrediction]:
    """The library's permutation-proof ordering: confidence descending, then
    correct-before-error, then predicted, then label."""
    return sorted(preds, key=lambda p: (-p.confidence, not p.correct, p.predicted, p.label))


def oracle_auroc(preds: list[ScoredPrediction]) -> float:
    """Pairwise Mann-Whitney count, ties worth half a win. O(n^2)."""
    pos = np.array([p.confidence for p in preds if p.correct])
    neg = np.array([p.confidence for p in preds if not p.correct])
    diff = pos[:, None] - neg[None, :]  # one entry per (correct, error) pair
    wins = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return float(wins) / (len(pos) * len(neg))


def oracle_fpr_at_95_tpr(preds: list[ScoredPrediction], target: float = 0.95) -> float:
    """Scan every observed confidence as the threshold; keep the lowest FPR
    among thresholds that retain at least `target` of the correct set."""
    pos = np.array([p.confidence for p in preds if p.correct])
    neg = np.array([p.confidence for p in preds if not p.correct])
    best = 1.0
    for delta in {p.confidence for p in preds}:
        tpr = float(np.mean(pos >= delta))
        if tpr >= target:
            best = min(best, float(np.mean(neg >= delta)))
    return best


def oracle_risk_coverage(preds: list[ScoredPrediction]) -> tuple[float, float]:
    """AURC by explicit per-coverage risk enumeration; E-AURC against the
    oracle ordering that files every correct prediction first."""
    ordered = canonical(preds)
    n = len(ordered)

    def area(seq):
        total = 0.0
        errors = 0
        for i, p in enumerate(seq, start=1):
            errors += 0 if p.correct else 1
            total += errors / i
        return total / n

    ideal = sorted(ordered, key=lambda p: not p.correct)
    aurc = area(ordered)
    return aurc, aurc - area(ideal)


def oracle_aupr(preds: list[ScoredPrediction], positive: str = "success") -> float:
    """Non-interpolated average precision by walking the ranking."""
    ordered = canonical(preds)
    if positive == "error":
        ordered = ordered[::-1]
    flags = [(p.correct if positive == "success" else not p.correct) for p in ordered]
    precisions = []
    hits = 0
    for i, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            precisions.append(hits / i)
    return float(np.mean(precisions))


def random_preds(
    rng: np.random.Generator,
    n: int | None = None,
    max_n: int = 256,
    tie_fraction: float = 0.3,
    C: int = 10,
) -> list[ScoredPrediction]:
    """Random scored predictions with deliberate confidence ties and both
    outcomes guaranteed present."""
    if n is None:
        n = int(rng.integers(4, max_n + 1))
    # draw from a small grid for a chunk of the samples to force ties
    conf = rng.uniform(0.05, 1.0, size=n)
    tied = rng.random(n) < tie_fraction
    conf[tied] = rng.choice([0.25, 0.5, 0.75], size=int(tied.sum()))
    labels = rng.integers(0, C, size=n)
    predicted = np.where(rng.random(n) < 0.6, labels, rng.integers(0, C, size=n))
    preds = [
        ScoredPrediction(float(c), int(p), int(y))
        for c, p, y in zip(conf, predicted, labels)
    ]
    if all(p.correct for p in preds):
        preds[0] = ScoredPrediction(preds[0].confidence, (preds[0].label + 1) % C, preds[0].label)
    if not any(p.correct for p in preds):
        preds[0] = ScoredPrediction(preds[0].confidence, preds[0].label, preds[0].label)
    return preds
