import math

import numpy as np
import pytest

from conftest import (
    oracle_aupr,
    oracle_auroc,
    oracle_fpr_at_95_tpr,
    oracle_risk_coverage,
    random_preds,
)
from misdkit.errors import UndefinedMetricError
from misdkit.metrics import (
    ScoredPrediction,
    aupr,
    auroc,
    binary_report,
    decide,
    fpr_at_95_tpr,
    full_report,
    predict,
    predict_batch,
    risk_coverage,
)

SP = ScoredPrediction

# the worked 4-sample set: confidences descending, second one wrong
WORKED = [SP(0.9, 0, 0), SP(0.8, 1, 2), SP(0.7, 3, 3), SP(0.6, 4, 4)]


def test_predict_self_similarity():
    feats = np.eye(5)[:4] + 0.01  # distinct rows, none parallel to q
    q = feats[3].copy()
    conf, predicted = predict(q, feats)
    assert predicted == 3


def test_predict_all_ties():
    feats = np.stack([np.ones(4)] * 5)
    conf, predicted = predict(np.ones(4), feats)
    assert predicted == 0
    assert conf == pytest.approx(1 / 5, abs=1e-12)


def test_predict_matches_bruteforce_scan():
    rng = np.random.default_rng(4)
    for _ in range(50):
        feats = rng.standard_normal((7, 6))
        q = rng.standard_normal(6)
        sims = [
            float(q @ t / (np.linalg.norm(q) * np.linalg.norm(t))) for t in feats
        ]
        _, predicted = predict(q, feats)
        assert predicted == int(np.argmax(sims))


def test_predict_batch_matches_scalar():
    rng = np.random.default_rng(5)
    feats = rng.standard_normal((6, 8))
    Q = rng.standard_normal((20, 8))
    confs, preds = predict_batch(Q, feats)
    for i in range(20):
        c, p = predict(Q[i], feats)
        assert confs[i] == pytest.approx(c, abs=1e-12)
        assert preds[i] == p


def test_decide_boundary():
    assert decide(0.9, 0.5)
    assert decide(0.5, 0.5)  # boundary accepts
    assert not decide(0.49, 0.5)


def test_auroc_perfect_separation():
    preds = [SP(0.9, 0, 0), SP(0.8, 1, 1), SP(0.1, 0, 1)]
    assert auroc(preds) == pytest.approx(1.0, abs=1e-12)


def test_auroc_full_ties():
    preds = [SP(0.5, 0, 0), SP(0.5, 1, 1), SP(0.5, 0, 1)]
    assert auroc(preds) == pytest.approx(0.5, abs=1e-12)


def test_auroc_one_win_of_two_pairs():
    preds = [SP(0.9, 0, 0), SP(0.4, 1, 1), SP(0.6, 0, 1)]
    assert auroc(preds) == pytest.approx(0.5, abs=1e-12)


def test_auroc_requires_both_outcomes():
    with pytest.raises(UndefinedMetricError):
        auroc([SP(0.9, 0, 0), SP(0.8, 1, 1)])


def test_fpr95_perfect_separation():
    preds = [SP(0.9, 0, 0)] * 30 + [SP(0.1, 0, 1)]
    assert fpr_at_95_tpr(preds) == pytest.approx(0.0, abs=1e-12)


def test_fpr95_forced_low_threshold():
    preds = [SP(0.9, 0, 0), SP(0.7, 0, 0), SP(0.6, 0, 0), SP(0.8, 0, 1)]
    assert fpr_at_95_tpr(preds) == pytest.approx(1.0, abs=1e-12)


def test_fpr95_all_tied():
    preds = [SP(0.5, 0, 0), SP(0.5, 1, 1), SP(0.5, 0, 1)]
    assert fpr_at_95_tpr(preds) == pytest.approx(1.0, abs=1e-12)


def test_risk_coverage_worked_values():
    aurc, e_aurc = risk_coverage(WORKED)
    assert aurc == pytest.approx(0.2708333333333333, abs=1e-12)
    assert e_aurc == pytest.approx(0.2083333333333333, abs=1e-12)


def test_risk_coverage_all_correct():
    aurc, e_aurc = risk_coverage([SP(0.9, 0, 0), SP(0.3, 1, 1)])
    assert aurc == 0.0 and e_aurc == 0.0


def test_risk_coverage_all_errors():
    aurc, e_aurc = risk_coverage([SP(0.9, 0, 1), SP(0.3, 0, 1)])
    assert aurc == pytest.approx(1.0, abs=1e-12)
    assert e_aurc == pytest.approx(0.0, abs=1e-12)


def test_aupr_worked_values():
    assert aupr(WORKED, "success") == pytest.approx((1 + 2 / 3 + 3 / 4) / 3, abs=1e-12)
    assert aupr(WORKED, "error") == pytest.approx(1 / 3, abs=1e-12)


def test_aupr_perfect_separation():
    preds = [SP(0.9, 0, 0), SP(0.8, 1, 1), SP(0.1, 0, 1)]
    assert aupr(preds, "success") == pytest.approx(1.0, abs=1e-12)


def test_full_report_worked_vector():
    r = full_report(WORKED)
    assert round(r.acc, 2) == 75.00
    assert round(r.fpr95, 2) == 100.00
    assert round(r.aurc, 2) == 270.83
    assert round(r.e_aurc, 2) == 208.33
    assert round(r.auroc, 2) == 33.33
    assert round(r.aupr_success, 2) == 80.56
    assert round(r.aupr_error, 2) == 33.33


def test_full_report_degenerate_perfect_predictor():
    preds = [SP(0.9, 0, 0), SP(0.8, 1, 1), SP(0.7, 2, 2)]
    r = full_report(preds)
    assert r.acc == pytest.approx(100.0)
    assert r.auroc is None and r.fpr95 is None
    assert r.aurc == pytest.approx(0.0)
    assert r.aupr_error is None
    assert "n/a" in r.to_text()


def test_report_bounds_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        preds = random_preds(rng, max_n=64)
        r = full_report(preds)
        for name in ("acc", "fpr95", "auroc", "aupr_success", "aupr_error"):
            v = getattr(r, name)
            if v is not None:
                assert 0.0 <= v <= 100.0
        assert r.aurc >= r.e_aurc >= 0.0


def test_oracle_equivalence_sample():
    rng = np.random.default_rng(12)
    for _ in range(100):
        preds = random_preds(rng, max_n=96)
        assert auroc(preds) == pytest.approx(oracle_auroc(preds), abs=1e-12)
        assert fpr_at_95_tpr(preds) == pytest.approx(oracle_fpr_at_95_tpr(preds), abs=1e-12)
        aurc, e_aurc = risk_coverage(preds)
        o_aurc, o_e = oracle_risk_coverage(preds)
        assert aurc == pytest.approx(o_aurc, abs=1e-12)
        assert e_aurc == pytest.approx(o_e, abs=1e-12)
        for pol in ("success", "error"):
            assert aupr(preds, pol) == pytest.approx(oracle_aupr(preds, pol), abs=1e-12)


def _report_vector(r):
    return [getattr(r, name) for name in r._FIELDS]


def test_order_invariance():
    rng = np.random.default_rng(13)
    for _ in range(50):
        preds = random_preds(rng, max_n=64)
        base = _report_vector(full_report(preds))
        shuffled = list(preds)
        rng.shuffle(shuffled)
        other = _report_vector(full_report(shuffled))
        for a, b in zip(base, other):
            assert (a is None and b is None) or a == pytest.approx(b, abs=1e-12)


def test_rank_invariance_cube_and_exp():
    rng = np.random.default_rng(14)
    for _ in range(50):
        preds = random_preds(rng, max_n=64)
        base = _report_vector(full_report(preds))
        for fn in (lambda x: x**3, lambda x: math.exp(x) / math.e):
            mapped = [SP(fn(p.confidence), p.predicted, p.label) for p in preds]
            other = _report_vector(full_report(mapped))
            for a, b in zip(base, other):
                assert (a is None and b is None) or a == pytest.approx(b, abs=1e-12)


def test_label_swap_flips_auroc():
    rng = np.random.default_rng(15)
    for _ in range(50):
        # distinct confidences: no ties, so the flip is exact
        n = int(rng.integers(4, 40))
        conf = rng.permutation(np.linspace(0.1, 0.9, n))
        correct = rng.random(n) < 0.5
        if correct.all():
            correct[0] = False
        if not correct.any():
            correct[0] = True
        preds = [SP(float(c), 0 if ok else 1, 0) for c, ok in zip(conf, correct)]
        flipped = [SP(p.confidence, p.predicted, 1 - p.label) for p in preds]
        assert auroc(flipped) == pytest.approx(1.0 - auroc(preds), abs=1e-12)


def test_binary_report_matches_full_on_equivalent_input():
    rng = np.random.default_rng(16)
    preds = random_preds(rng, n=80)
    conf = np.array([p.confidence for p in preds])
    correct = np.array([p.correct for p in preds])
    rb = binary_report(conf, correct)
    rf = full_report(preds)
    assert rb.auroc == pytest.approx(rf.auroc, abs=1e-12)
    assert rb.fpr95 == pytest.approx(rf.fpr95, abs=1e-12)
    assert rb.aurc is None and rb.aupr_success is None
