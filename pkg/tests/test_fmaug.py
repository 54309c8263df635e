import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqmix.fmaug import (
    MixMask, build_training_samples, enumerate_pairs, generate_mix_mask, mix_views,
)
from freqmix.frequency_views import ANCHOR, GaussianParams, ParameterError


def _masks(seed, n, h=32, w=40):
    r = np.random.default_rng(seed)
    return [generate_mix_mask(r, h, w) for _ in range(n)]


def test_full_cover_mask():
    m = generate_mix_mask(np.random.default_rng(0), 32, 32, (1, 1), (1.0, 1.0))
    assert m.coverage == 1.0
    assert m.mask.all()


def test_mask_determinism():
    a = generate_mix_mask(np.random.default_rng(5), 64, 64)
    b = generate_mix_mask(np.random.default_rng(5), 64, 64)
    assert np.array_equal(a.mask, b.mask)


def test_mask_coverage_over_seed_sweep():
    for m in _masks(11, 1000):
        assert set(np.unique(m.mask)) <= {0, 1}
        assert 0 < m.coverage <= 1


def test_mask_coverage_range_respected():
    r = np.random.default_rng(2)
    for _ in range(50):
        m = generate_mix_mask(r, 32, 32, coverage_range=(0.1, 0.3))
        assert 0.1 <= m.coverage <= 0.3


def test_degenerate_mask_size():
    with pytest.raises(ParameterError):
        generate_mix_mask(np.random.default_rng(0), 4, 32)


def test_mix_identities(rng):
    a, b = rng.normal(size=(16, 16, 3)), rng.normal(size=(16, 16, 3))
    ones = MixMask(np.ones((16, 16), np.uint8))
    zeros = MixMask(np.zeros((16, 16), np.uint8))
    assert np.array_equal(mix_views(a, b, ones), a)
    assert np.array_equal(mix_views(a, b, zeros), b)
    m = generate_mix_mask(rng, 16, 16)
    assert np.array_equal(mix_views(a, a, m), a)


def test_mix_matches_formula(rng):
    a, b = rng.normal(size=(16, 16, 3)), rng.normal(size=(16, 16, 3))
    m = generate_mix_mask(rng, 16, 16)
    M = m.mask[:, :, None].astype(float)
    np.testing.assert_array_equal(mix_views(a, b, m), M * a + (1 - M) * b)


def test_mix_shape_mismatch(rng):
    with pytest.raises(ParameterError):
        mix_views(rng.random((16, 16, 3)), rng.random((16, 17, 3)), generate_mix_mask(rng, 16, 16))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_mask_algebra_and_range(seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(20, 24, 3)), r.normal(size=(20, 24, 3))
    m = generate_mix_mask(r, 20, 24)
    ab, ba = mix_views(a, b, m), mix_views(b, a, m)
    assert np.array_equal(ab + ba, a + b)
    assert np.all(ab >= np.minimum(a, b)) and np.all(ab <= np.maximum(a, b))


def test_pairs_n3():
    assert enumerate_pairs(3) == [(1, 2, 1), (1, 3, 2), (2, 1, 3), (2, 3, 4), (3, 1, 5), (3, 2, 6)]
    assert len(enumerate_pairs(2)) == 2


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_pairs_brute_force(n):
    brute = sorted(p for p in itertools.product(range(1, n + 1), repeat=2) if p[0] != p[1])
    got = enumerate_pairs(n)
    assert [(i, j) for i, j, _ in got] == brute
    assert [k for _, _, k in got] == list(range(1, n * (n - 1) + 1))


def test_pairs_reject_small():
    with pytest.raises(ParameterError):
        enumerate_pairs(1)


@pytest.fixture
def image_and_mask(rng):
    return rng.random((64, 64, 3)), (rng.random((64, 64)) > 0.8).astype(np.uint8)


def test_samples_n3(image_and_mask, rng):
    img, mask = image_and_mask
    samples = build_training_samples(img, mask, ANCHOR, rng, 3, radius_range=(5, 31))
    assert len(samples) == 6
    assert all(s.target is samples[0].target for s in samples)
    assert [s.k for s in samples] == list(range(1, 7))
    assert all(s.pair[0] != s.pair[1] for s in samples)
    assert all(np.array_equal(s.seg_mask, mask) for s in samples)


def test_samples_subsample(image_and_mask, rng):
    img, mask = image_and_mask
    samples = build_training_samples(img, mask, ANCHOR, rng, 3, subsample=2, radius_range=(5, 31))
    assert len(samples) == 2
    assert len({s.pair for s in samples}) == 2


def test_samples_equal_params_make_identical_mixes(image_and_mask, rng):
    img, mask = image_and_mask
    p = GaussianParams(9, 3.0)
    samples = build_training_samples(img, mask, ANCHOR, rng, perturbed=[p, p, p])
    common = samples[0].mixed
    assert all(np.array_equal(s.mixed, common) for s in samples)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_sample_count(image_and_mask, n):
    img, mask = image_and_mask
    samples = build_training_samples(img, mask, ANCHOR, np.random.default_rng(n), n, radius_range=(5, 31))
    brute = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    assert len(samples) == len(brute) == n * (n - 1)


def test_samples_reject_bad_mask(rng):
    with pytest.raises(ParameterError):
        build_training_samples(rng.random((64, 64, 3)), np.full((64, 64), 2), ANCHOR, rng, radius_range=(5, 31))
    with pytest.raises(ParameterError):
        build_training_samples(rng.random((64, 64, 3)), np.zeros((32, 64)), ANCHOR, rng, radius_range=(5, 31))
