"""Threshold calculators against an arbitrary-precision oracle, plus the
enumerable coverage testbed."""

import math

import mpmath as mp
import numpy as np
import pytest

from mixkd import bounds as B

mp.mp.dps = 50


def mp_hoeffding(M, G, delta, n):
    return mp.mpf(M) * mp.sqrt(mp.log(mp.mpf(G) / mp.mpf(delta))
                               / (2 * mp.mpf(n)))


def mp_thm1_b(M, G, delta, a, eps, tri):
    margin = mp.mpf(eps) - mp.mpf(tri)
    raw = mp.mpf(M) ** 2 * mp.log(mp.mpf(G) / mp.mpf(delta)) / (2 * margin ** 2) - a
    return max(0, int(mp.ceil(raw)))


def mp_thm2_b(M, delta, a, eps, tri, L, R):
    margin = mp.mpf(eps) - mp.mpf(tri) - 2 * mp.mpf(L) * mp.mpf(R)
    raw = mp.mpf(M) ** 2 * mp.log(1 / mp.mpf(delta)) / (2 * margin ** 2) - a
    return max(0, int(mp.ceil(raw)))


def mp_thm3(delta, a, eps, tri, logC):
    margin_sq = (mp.mpf(eps) - mp.mpf(tri)) ** 2
    denom = margin_sq - 64 * mp.mpf(logC) / a
    b = max(0, int(mp.ceil(64 * mp.log(4 / mp.mpf(delta)) / denom)))
    a_min = max(0, int(mp.ceil(16 / margin_sq)))
    return b, a_min


def test_hoeffding_against_oracle(rng):
    for _ in range(50):
        M = float(rng.uniform(0.1, 5.0))
        G = int(rng.integers(1, 10 ** 6))
        delta = float(rng.uniform(1e-4, 1.0))
        n = int(rng.integers(1, 10 ** 7))
        got = B.hoeffding_gap_bound(M, G, delta, n)
        want = float(mp_hoeffding(M, G, delta, n))
        assert got == pytest.approx(want, rel=1e-12)


def test_hoeffding_input_validation():
    with pytest.raises(B.BoundError):
        B.hoeffding_gap_bound(1.0, 10, 0.1, 0)
    with pytest.raises(B.BoundError):
        B.hoeffding_gap_bound(1.0, 0, 0.1, 10)
    with pytest.raises(B.BoundError):
        B.hoeffding_gap_bound(1.0, 10, 1.5, 10)


def test_thm1_against_oracle(rng):
    for _ in range(50):
        M = float(rng.uniform(0.1, 4.0))
        G = int(rng.integers(2, 10 ** 4))
        delta = float(rng.uniform(0.001, 0.5))
        a = int(rng.integers(0, 1000))
        tri = float(rng.uniform(0.0, 0.2))
        eps = tri + float(rng.uniform(0.01, 0.5))
        assert B.thm1_required_b(M, G, delta, a, eps, tri) == \
            mp_thm1_b(M, G, delta, a, eps, tri)


def test_thm1_vacuous():
    with pytest.raises(B.VacuousBoundError):
        B.thm1_required_b(1.0, 10, 0.1, 0, 0.05, 0.05)


def test_thm2_against_oracle(rng):
    for _ in range(50):
        M = float(rng.uniform(0.1, 4.0))
        delta = float(rng.uniform(0.001, 0.5))
        a = int(rng.integers(0, 1000))
        tri = float(rng.uniform(0.0, 0.1))
        L = float(rng.uniform(0.1, 2.0))
        R = float(rng.uniform(0.0, 0.05))
        eps = tri + 2 * L * R + float(rng.uniform(0.01, 0.5))
        assert B.thm2_required_b(M, delta, a, eps, tri, L, R) == \
            mp_thm2_b(M, delta, a, eps, tri, L, R)


def test_thm2_vacuous():
    with pytest.raises(B.VacuousBoundError):
        B.thm2_required_b(1.0, 0.1, 0, 0.1, 0.0, 1.0, 0.1)


def test_thm3_against_oracle(rng):
    for _ in range(50):
        delta = float(rng.uniform(0.001, 0.5))
        tri = float(rng.uniform(0.0, 0.1))
        eps = tri + float(rng.uniform(0.2, 1.0))
        margin_sq = (eps - tri) ** 2
        a_min = max(1, math.ceil(16.0 / margin_sq))
        a = int(rng.integers(a_min, a_min + 2000))
        logC = float(rng.uniform(0.0, margin_sq * a / 64.0 * 0.9))
        assert B.thm3_required_b(delta, a, eps, tri, logC) == \
            mp_thm3(delta, a, eps, tri, logC)


def test_thm3_vacuous_cases():
    with pytest.raises(B.VacuousBoundError):
        B.thm3_required_b(0.1, 100, 0.1, 0.1, 0.0)  # no margin
    with pytest.raises(B.VacuousBoundError):
        B.thm3_required_b(0.1, 0, 0.5, 0.0, 0.0)  # a < 1
    with pytest.raises(B.VacuousBoundError):
        B.thm3_required_b(0.1, 10, 0.5, 0.0, 10.0)  # capacity term dominates
    with pytest.raises(B.VacuousBoundError):
        B.thm3_required_b(0.1, 10, 1.0, 0.0, 0.001)  # a below 16/margin^2


def test_bound_input_validation():
    B.BoundInput()
    with pytest.raises(B.BoundError):
        B.BoundInput(M=0.0)
    with pytest.raises(B.BoundError):
        B.BoundInput(delta=0.0)
    with pytest.raises(B.BoundError):
        B.BoundInput(a=-1)


def test_monotonicity_grids():
    ns = [10, 100, 1000, 10000]
    vals = [B.hoeffding_gap_bound(1.0, 64, 0.1, n) for n in ns]
    assert vals == sorted(vals, reverse=True)

    eps_grid = [0.05, 0.1, 0.2, 0.4]
    bs = [B.thm1_required_b(1.0, 64, 0.1, 0, e, 0.0) for e in eps_grid]
    assert bs == sorted(bs, reverse=True)

    deltas = [0.01, 0.05, 0.2]
    bs = [B.thm1_required_b(1.0, 64, d, 0, 0.1, 0.0) for d in deltas]
    assert bs == sorted(bs, reverse=True)

    # larger a means fewer augmented samples required
    as_grid = [0, 50, 150]
    bs = [B.thm1_required_b(1.0, 64, 0.1, a, 0.1, 0.0) for a in as_grid]
    assert bs == sorted(bs, reverse=True)


# ---------------------------------------------------------------------------
# enumerable testbed
# ---------------------------------------------------------------------------

def test_make_testbed_properties():
    tb = B.make_testbed(n_bits=6, seed=0)
    assert tb.inputs.shape == (64, 6)
    assert set(np.unique(tb.inputs)) == {0.0, 1.0}
    assert tb.probs.sum() == pytest.approx(1.0)
    assert (tb.probs > 0).all()
    with pytest.raises(B.BoundError):
        B.make_testbed(n_bits=20)


def test_scorer_class_enumeration(rng):
    tb = B.make_testbed(n_bits=6, seed=1)
    gc = B.make_scorer_class(tb, g_size=16, seed=2)
    assert gc.cardinality == 16
    losses = gc.loss_matrix(tb.inputs)
    assert losses.shape == (16, 64)
    assert set(np.unique(losses)) <= {0.0, 1.0}
    with pytest.raises(B.BoundError):
        gc.loss_matrix(np.empty((0, 6)))


def test_population_risks_exact(rng):
    tb = B.make_testbed(n_bits=5, seed=3)
    gc = B.make_scorer_class(tb, g_size=8, seed=4)
    risks = B.population_risks(tb, gc)
    assert ((0.0 <= risks) & (risks <= 1.0)).all()
    # brute-force check for one scorer
    g0 = (tb.inputs @ gc.weights[0] >= gc.thresholds[0]).astype(float)
    f = gc.teacher.predict(tb.inputs)
    assert risks[0] == pytest.approx(float((np.abs(g0 - f) * tb.probs).sum()))


def test_rademacher_estimate_range(rng):
    tb = B.make_testbed(n_bits=6, seed=5)
    gc = B.make_scorer_class(tb, g_size=16, seed=6)
    sample = tb.sample(100, rng)
    est = B.rademacher_mc_estimate(gc, sample, trials=200, rng=rng)
    assert 0.0 <= est <= 1.0
    with pytest.raises(B.BoundError):
        B.rademacher_mc_estimate(gc, sample, trials=0, rng=rng)


def test_estimate_shift_delta_bounded(rng):
    tb = B.make_testbed(n_bits=6, seed=7)
    gc = B.make_scorer_class(tb, g_size=8, seed=8)
    d = B.estimate_shift_delta(tb, gc, g_index=0, n_mc=2000, rng=rng)
    assert -1.0 <= d <= 1.0


def test_empirical_gap_experiment_report(rng):
    tb = B.make_testbed(n_bits=6, seed=9)
    gc = B.make_scorer_class(tb, g_size=16, seed=10)
    report = B.empirical_gap_experiment(tb, gc, a=50, b_mix=25, trials=30,
                                        delta=0.1, rng=rng)
    assert report.trials == 30
    assert 0.0 <= report.coverage_fraction <= 1.0
    assert report.gamma == (50 + 25) // 50
    assert len(report.gaps_augmented) == 30
    d = report.to_dict()
    assert d["delta"] == 0.1
    with pytest.raises(B.BoundError):
        B.empirical_gap_experiment(tb, gc, a=0, b_mix=0, trials=5, delta=0.1,
                                   rng=rng)
