import numpy as np
import pytest

from misdkit.augment import (
    ViewSet,
    alternative_augment,
    bilinear_resize,
    random_crops,
    sample_crop_rect,
    select_views,
)
from misdkit.errors import ConfigurationError, UndefinedSimilarityError


def test_bilinear_resize_identity_and_constant():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, size=(8, 8, 3))
    assert bilinear_resize(img, 8, 8) == pytest.approx(img, abs=0)
    const = np.full((5, 7, 3), 0.42)
    assert bilinear_resize(const, 16, 16) == pytest.approx(np.full((16, 16, 3), 0.42), abs=1e-12)


def test_crop_rect_within_bounds_10000_draws():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        h = int(rng.integers(4, 64))
        w = int(rng.integers(4, 64))
        top, left, ch, cw = sample_crop_rect(h, w, rng)
        assert 0 <= top and top + ch <= h
        assert 0 <= left and left + cw <= w
        assert ch >= 1 and cw >= 1


def test_crop_rect_area_and_aspect_statistics():
    rng = np.random.default_rng(2)
    fracs = []
    for _ in range(5000):
        _, _, ch, cw = sample_crop_rect(256, 256, rng)
        fracs.append(ch * cw / 256**2)
    fracs = np.array(fracs)
    # rounding/clamping blurs the edges slightly at integer sizes
    assert fracs.min() >= 0.18 and fracs.max() <= 1.0
    assert 0.5 < fracs.mean() < 0.7  # uniform [0.2, 1.0] has mean 0.6


def test_random_crops_contract():
    rng = np.random.default_rng(3)
    image = rng.uniform(0, 1, size=(32, 32, 3))
    crops = random_crops(image, 4, np.random.default_rng(42), 32, 32)
    assert crops.shape == (4, 32, 32, 3)
    again = random_crops(image, 4, np.random.default_rng(42), 32, 32)
    assert np.array_equal(again, crops)


def test_random_crops_rejects_small_k():
    rng = np.random.default_rng(4)
    with pytest.raises(ConfigurationError):
        random_crops(np.zeros((8, 8, 1)), 1, rng, 8, 8)


def _viewset(embs):
    return ViewSet(sample_id=0, embeddings=np.asarray(embs, dtype=float), label=0)


def test_select_views_forced_case():
    t = np.array([1.0, 0.0])
    views = _viewset([[0.2, 0.98], [0.9, 0.436], [-0.1, 0.995]])
    pair = select_views(views, t)
    assert (pair.normal_index, pair.pseudo_index) == (1, 2)
    assert np.array_equal(pair.normal, views.embeddings[1])


def test_select_views_all_ties_rule():
    t = np.array([1.0, 0.0])
    views = _viewset([[1.0, 0.0]] * 3)
    pair = select_views(views, t)
    assert (pair.normal_index, pair.pseudo_index) == (0, 2)


def test_select_views_matches_bruteforce():
    rng = np.random.default_rng(5)
    for _ in range(100):
        emb = rng.standard_normal((8, 6))
        t = rng.standard_normal(6)
        sims = [
            float(e @ t / (np.linalg.norm(e) * np.linalg.norm(t))) for e in emb
        ]
        pair = select_views(_viewset(emb), t)
        assert sims[pair.normal_index] == max(sims)
        assert sims[pair.pseudo_index] == min(sims)
        assert sims[pair.pseudo_index] <= sims[pair.normal_index]


def test_select_views_scale_invariant_and_idempotent():
    rng = np.random.default_rng(6)
    emb = rng.standard_normal((5, 4))
    t = rng.standard_normal(4)
    a = select_views(_viewset(emb), t)
    b = select_views(_viewset(emb), 10.0 * t)
    c = select_views(_viewset(emb), t)
    assert (a.normal_index, a.pseudo_index) == (b.normal_index, b.pseudo_index)
    assert (a.normal_index, a.pseudo_index) == (c.normal_index, c.pseudo_index)


def test_select_views_zero_norm_errors():
    with pytest.raises(UndefinedSimilarityError):
        select_views(_viewset([[0.0, 0.0], [1.0, 0.0]]), np.array([1.0, 0.0]))
    with pytest.raises(UndefinedSimilarityError):
        select_views(_viewset([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))


def test_cutout_zeroes_one_quarter_area():
    rng = np.random.default_rng(7)
    image = np.ones((32, 32, 3))
    out = alternative_augment(image, "cutout", rng)
    zeroed = np.all(out == 0.0, axis=2)
    assert zeroed.sum() == 16 * 16
    # the zeroed region is a contiguous square
    rows = np.where(zeroed.any(axis=1))[0]
    cols = np.where(zeroed.any(axis=0))[0]
    assert len(rows) == 16 and len(cols) == 16
    assert np.all(zeroed[rows[0] : rows[0] + 16, cols[0] : cols[0] + 16])


def test_noise_determinism_and_sigma():
    image = np.full((1000, 1000, 1), 0.5)
    a = alternative_augment(image, "gaussian-noise", np.random.default_rng(8))
    b = alternative_augment(image, "gaussian-noise", np.random.default_rng(8))
    assert np.array_equal(a, b)
    residual = a - image
    assert abs(residual.mean()) < 0.001
    assert abs(residual.std() - 0.1) / 0.1 < 0.05  # within 5% of sigma over 1e6 pixels


def test_unknown_strategy_errors():
    with pytest.raises(ConfigurationError):
        alternative_augment(np.zeros((4, 4, 1)), "solarize", np.random.default_rng(0))
