"""Mixup recipes, the Beta sampler, and interpolation algebra."""

import numpy as np
import pytest

from mixkd import autodiff as ad
from mixkd.autodiff import Tensor, constant
from mixkd.mixup import (MixupConfig, MixupError, MixupSpec, make_pairs,
                         materialize, mix_batch, mix_labels, sample_lambda)


def test_spec_validation():
    MixupSpec(0, 1, 0.5)
    with pytest.raises(MixupError):
        MixupSpec(0, 1, 1.5)
    with pytest.raises(MixupError):
        MixupSpec(-1, 0, 0.5)


def test_config_validation():
    with pytest.raises(MixupError):
        MixupConfig(beta_alpha=0.0)
    with pytest.raises(MixupError):
        MixupConfig(mixup_ratio=-1)
    with pytest.raises(MixupError):
        MixupConfig(pairing_mode="nope")


def test_sample_lambda_range_and_moments(rng):
    cfg = MixupConfig(beta_alpha=0.4)
    draws = np.array([sample_lambda(cfg, rng) for _ in range(20000)])
    assert ((0.0 <= draws) & (draws <= 1.0)).all()
    # Beta(a,a): mean 1/2, variance a^2/((2a)^2 (2a+1)) = 5/36 for a = 0.4
    assert draws.mean() == pytest.approx(0.5, abs=0.02)
    assert draws.var() == pytest.approx(5.0 / 36.0, abs=0.01)


def test_make_pairs_coverage(rng):
    cfg = MixupConfig(mixup_ratio=3)
    specs = make_pairs(8, cfg, rng)
    assert len(specs) == 24
    counts = np.bincount([s.index_i for s in specs], minlength=8)
    np.testing.assert_array_equal(counts, 3)
    assert all(0 <= s.index_j < 8 for s in specs)


def test_make_pairs_independent_extra(rng):
    cfg = MixupConfig(pairing_mode="independent_extra")
    specs = make_pairs(6, cfg, rng, extra_pool_size=10)
    partners = [s.index_j for s in specs]
    assert len(set(partners)) == 6  # without replacement while pool lasts
    with pytest.raises(MixupError):
        make_pairs(6, cfg, rng, extra_pool_size=0)


def test_make_pairs_zero_ratio(rng):
    assert make_pairs(4, MixupConfig(mixup_ratio=0), rng) == []


def _random_pair(rng, n=4, t=5, d=3, c=2):
    emb_i = constant(rng.normal(size=(n, t, d)))
    emb_j = constant(rng.normal(size=(n, t, d)))
    mask_i = np.ones((n, t), dtype=bool)
    mask_j = np.ones((n, t), dtype=bool)
    labels_i = np.eye(c)[rng.integers(0, c, n)]
    labels_j = np.eye(c)[rng.integers(0, c, n)]
    return emb_i, emb_j, mask_i, mask_j, labels_i, labels_j


def test_endpoint_identities(rng):
    ei, ej, mi, mj, li, lj = _random_pair(rng)
    out1, _, lab1 = mix_batch(ei, ej, mi, mj, li, lj, np.ones(4))
    np.testing.assert_array_equal(out1.data, ei.data)
    np.testing.assert_array_equal(lab1, li)
    out0, _, lab0 = mix_batch(ei, ej, mi, mj, li, lj, np.zeros(4))
    np.testing.assert_array_equal(out0.data, ej.data)
    np.testing.assert_array_equal(lab0, lj)


def test_symmetry(rng):
    ei, ej, mi, mj, li, lj = _random_pair(rng)
    lam = rng.uniform(size=4)
    a, _, la = mix_batch(ei, ej, mi, mj, li, lj, lam)
    b, _, lb = mix_batch(ej, ei, mj, mi, lj, li, 1.0 - lam)
    np.testing.assert_allclose(a.data, b.data, atol=1e-15)
    np.testing.assert_allclose(la, lb, atol=1e-15)


def test_label_simplex_preserved(rng):
    ei, ej, mi, mj, li, lj = _random_pair(rng)
    _, _, labels = mix_batch(ei, ej, mi, mj, li, lj, rng.uniform(size=4))
    np.testing.assert_allclose(labels.sum(axis=1), 1.0, atol=1e-12)
    assert (labels >= 0).all()


def test_mask_union_and_pad_tail(rng):
    n, t, d = 2, 6, 3
    ei = rng.normal(size=(n, t, d))
    ej = rng.normal(size=(n, t, d))
    mask_i = np.array([[True] * 5 + [False]] * n)
    mask_j = np.array([[True] * 3 + [False] * 3] * n)
    ei[~mask_i] = 0.0
    ej[~mask_j] = 0.0  # pad convention: exact zero embeddings
    lam = np.array([0.3, 0.8])
    mixed, mixed_mask, _ = mix_batch(constant(ei), constant(ej), mask_i,
                                     mask_j, np.eye(2)[[0, 1]],
                                     np.eye(2)[[1, 0]], lam)
    np.testing.assert_array_equal(mixed_mask, mask_i | mask_j)
    # beyond the shorter sequence the mix degenerates to lambda * x_i
    np.testing.assert_allclose(mixed.data[:, 3:5],
                               lam[:, None, None] * ei[:, 3:5], atol=1e-15)


def test_mix_batch_shape_errors(rng):
    ei, ej, mi, mj, li, lj = _random_pair(rng)
    with pytest.raises(MixupError):
        mix_batch(ei, ej, mi, mj, li, lj, np.ones(3))
    with pytest.raises(MixupError):
        mix_batch(ei, constant(rng.normal(size=(4, 5, 4))), mi, mj, li, lj,
                  np.ones(4))


def test_materialize_matches_manual(rng):
    emb = constant(rng.normal(size=(5, 4, 3)))
    mask = np.ones((5, 4), dtype=bool)
    labels = np.eye(2)[[0, 1, 0, 1, 0]]
    specs = [MixupSpec(0, 3, 0.25), MixupSpec(2, 1, 0.9)]
    mixed, _, mixed_labels = materialize(specs, emb, mask, labels)
    for k, s in enumerate(specs):
        np.testing.assert_allclose(
            mixed.data[k],
            s.lam * emb.data[s.index_i] + (1 - s.lam) * emb.data[s.index_j],
            atol=1e-15)
        np.testing.assert_allclose(
            mixed_labels[k],
            s.lam * labels[s.index_i] + (1 - s.lam) * labels[s.index_j])


def test_materialize_extra_pool(rng):
    emb = constant(rng.normal(size=(3, 4, 2)))
    pool = constant(rng.normal(size=(6, 4, 2)))
    mask = np.ones((3, 4), dtype=bool)
    pool_mask = np.ones((6, 4), dtype=bool)
    labels = np.eye(2)[[0, 1, 0]]
    pool_labels = np.eye(2)[[1, 1, 0, 0, 1, 0]]
    specs = [MixupSpec(1, 5, 0.5)]
    mixed, _, _ = materialize(specs, emb, mask, labels, extra_emb=pool,
                              extra_mask=pool_mask, extra_labels=pool_labels)
    np.testing.assert_allclose(
        mixed.data[0], 0.5 * emb.data[1] + 0.5 * pool.data[5], atol=1e-15)


def test_materialize_requires_specs(rng):
    emb = constant(rng.normal(size=(2, 3, 2)))
    with pytest.raises(MixupError):
        materialize([], emb, np.ones((2, 3), dtype=bool), np.eye(2))


def test_gradient_flows_with_lambda_weights(rng):
    emb = Tensor(rng.normal(size=(2, 3, 2)), requires_grad=True)
    mask = np.ones((2, 3), dtype=bool)
    labels = np.eye(2)
    mixed, _, _ = materialize([MixupSpec(0, 1, 0.7)], emb, mask, labels)
    ad.backward(ad.tsum(mixed))
    np.testing.assert_allclose(emb.grad[0], 0.7, atol=1e-15)
    np.testing.assert_allclose(emb.grad[1], 0.3, atol=1e-15)


def test_randomized_algebra_cases(rng):
    # compact randomized sweep of all the identities above
    for _ in range(200):
        n = int(rng.integers(1, 6))
        t = int(rng.integers(2, 5))
        d = int(rng.integers(1, 4))
        ei = constant(rng.normal(size=(n, t, d)))
        ej = constant(rng.normal(size=(n, t, d)))
        mask = np.ones((n, t), dtype=bool)
        li = np.eye(2)[rng.integers(0, 2, n)]
        lj = np.eye(2)[rng.integers(0, 2, n)]
        lam = rng.uniform(size=n)
        mixed, _, labels = mix_batch(ei, ej, mask, mask, li, lj, lam)
        np.testing.assert_allclose(labels.sum(axis=1), 1.0, atol=1e-12)
        sym, _, _ = mix_batch(ej, ei, mask, mask, lj, li, 1.0 - lam)
        np.testing.assert_allclose(mixed.data, sym.data, atol=1e-14)


def test_mix_labels_broadcast():
    li = np.eye(2)[[0, 1]]
    lj = np.eye(2)[[1, 0]]
    out = mix_labels(li, lj, np.array([0.25, 0.75]))
    np.testing.assert_allclose(out, [[0.25, 0.75], [0.25, 0.75]])
