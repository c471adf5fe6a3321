import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from wigner_limit._rng import stream
from wigner_limit.ensembles import sample_wigner
from wigner_limit.gaussian_fields import (
    GammaSpec,
    GridPath,
    block_sums,
    consistency_test,
    donsker_path,
    dyadic_qv,
    is_psd,
    mc_psi_cov,
    pairing_cov,
    pairing_cov_matrix,
    psi_cov,
    psi_cov_matrix,
    psi_increment,
    sample_bm,
    sample_sheet,
    sheet_bank,
    slice_increments,
)
from wigner_limit.grid_spaces import I_half, IntervalQ
from wigner_limit.moment_combinatorics import beta
from wigner_limit.walk_sums import B_nl_apply

HALF = Fraction(1, 2)
Q4 = Fraction(1, 4)
UNIT = IntervalQ(0, 1)
LEFT = IntervalQ(0, HALF)
RIGHT = IntervalQ(HALF, 1)
MIDDLE = IntervalQ(Q4, 3 * Q4)


def _var_se(x):
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    v = c @ c / (x.size - 1)
    return v, math.sqrt(max(np.mean(c ** 4) - v ** 2, 0.0) / x.size)


def _cov_se(x, y):
    p = (x - x.mean()) * (y - y.mean())
    return p.mean(), p.std(ddof=1) / math.sqrt(p.size)


def test_bm_basics():
    b = sample_bm(256, seed=1, count=10000)
    assert np.all(b.values[:, 0] == 0)
    v, se = _var_se(b.at(1))
    assert abs(v - 1) < 3 * se
    with pytest.raises(ValueError):
        GridPath(3, np.array([1.0, 0, 0, 0]))
    assert np.array_equal(sample_bm(64, seed=4).values, sample_bm(64, seed=4).values)


def test_dyadic_qv_level_10():
    qv = dyadic_qv(sample_bm(1024, seed=2, count=400), 10)
    assert abs(qv.mean() - 1) < 3 * qv.std(ddof=1) / math.sqrt(qv.size)
    assert qv.std() == pytest.approx(math.sqrt(2 / 1024), rel=0.2)
    with pytest.raises(ValueError):
        dyadic_qv(sample_bm(100, seed=2), 3)


def test_donsker_examples():
    p = donsker_path(np.ones(16))
    assert np.allclose(p.values, np.arange(17) / 4)
    xs = stream(3, "rad").integers(0, 2, size=(4000, 256)) * 2.0 - 1
    w1 = donsker_path(xs).at(1)
    v, se = _var_se(w1)
    assert abs(v - 1) < 3 * se


def test_donsker_ks():
    xs = stream(4, "ks").integers(0, 2, size=(2000, 2048)) * 2.0 - 1
    w1 = donsker_path(xs).at(1)
    # the sum of 2048 signs lives on a lattice of step 2/sqrt(2048); jitter within a cell
    w1 = w1 + stream(4, "jitter").uniform(-1, 1, w1.size) / math.sqrt(2048)
    assert stats.kstest(w1, "norm").pvalue > 0.01


def test_sheet_examples():
    s = sample_sheet(16, seed=5, count=10000)
    assert np.all(s.values[:, 0, :] == 0) and np.all(s.values[:, :, 0] == 0)
    c, se = _cov_se(s.at(HALF, HALF), s.at(1, 1))
    assert abs(c - 0.25) < 3 * se
    a, b = Q4, 3 * Q4
    slice_ = s.at(1, b) - s.at(1, a)
    v, se = _var_se(slice_)
    assert abs(v - 0.5) < 3 * se


def test_disjoint_rectangles_uncorrelated():
    s = sample_sheet(8, seed=6, count=20000)
    x = s.rect(LEFT, LEFT)
    y = s.rect(RIGHT, LEFT)
    c, se = _cov_se(x, y)
    assert abs(c) < 3 * se


def test_gamma_spec_defaults():
    assert dict(GammaSpec(3).coeffs) == {1: 2, 3: 1}
    with pytest.raises(ValueError):
        GammaSpec(0)


def test_psi_increment_variance_and_additivity():
    bank = sheet_bank(16, [1], seed=7, count=20000)
    g1 = GammaSpec(1)
    x = psi_increment(g1, UNIT, UNIT, bank)
    v, se = _var_se(x)
    assert float(pairing_cov(1, UNIT, UNIT, 1, UNIT, UNIT)) == 2
    assert abs(v - 2) < 3 * se
    parts = psi_increment(g1, UNIT, LEFT, bank) + psi_increment(g1, UNIT, RIGHT, bank)
    assert np.allclose(parts, x, atol=1e-12)
    with pytest.raises(KeyError):
        psi_increment(GammaSpec(2), UNIT, UNIT, bank)


def test_psi_increment_covariances_match_pairing_cov():
    bank = sheet_bank(16, [1, 2, 3], seed=8, count=20000)
    items = [(1, UNIT, LEFT), (1, UNIT, RIGHT), (3, LEFT, MIDDLE), (2, RIGHT, RIGHT), (1, IntervalQ(0, Q4), RIGHT)]
    vals = np.stack([psi_increment(GammaSpec(l), P, Q, bank) for l, P, Q in items], axis=1)
    target = pairing_cov_matrix(items)
    for a in range(len(items)):
        for b in range(a, len(items)):
            c, se = _cov_se(vals[:, a], vals[:, b])
            assert abs(c - target[a, b]) < 3.5 * se + 1e-12, (a, b)
    # disjoint Q's and P disjoint from both: no shared cells in either orientation
    assert pairing_cov(1, IntervalQ(0, Q4), IntervalQ(Q4, HALF), 1, IntervalQ(0, Q4), RIGHT) == 0


def test_psi_cov_examples():
    assert psi_cov(1, UNIT, 1, UNIT) == 1
    assert psi_cov(1, LEFT, 2, LEFT) == 0
    assert psi_cov(3, UNIT, 3, UNIT) == 5
    assert psi_cov(2, LEFT, 4, MIDDLE) == Fraction(stem_sum(2, 4)) * Q4
    items = [(l, P) for l in (1, 2, 3, 4) for P in (UNIT, LEFT, RIGHT, MIDDLE)]
    assert is_psd(psi_cov_matrix(items))[0]


def stem_sum(j, k):
    return beta(j + k) - beta(j) * beta(k)


def test_mc_psi_cov_small():
    items = [(1, UNIT), (2, UNIT), (3, LEFT), (1, MIDDLE)]
    mc = mc_psi_cov(items, n=256, replicas=800, seed=1)
    target = psi_cov_matrix(items)
    z = np.abs(mc.estimate - target) / np.maximum(mc.se, 1e-12)
    assert z.max() < 4
    assert mc.estimate[0, 1] == pytest.approx(0, abs=4 * mc.se[0, 1])


def test_block_sums_exact_moments():
    rng = stream(9, "block")
    rows, cols = block_sums(3, 5, 0.5, rng, 200000)
    assert np.allclose(rows.sum(axis=1), cols.sum(axis=1))
    emp = np.cov(np.hstack([rows, cols]).T)
    # rows: Var = s_q sigma^2, independent; cols: Var = s_p sigma^2; Cov(row, col) = sigma^2
    exp = np.zeros((8, 8))
    exp[:3, :3] = np.eye(3) * 5 * 0.25
    exp[3:, 3:] = np.eye(5) * 3 * 0.25
    exp[:3, 3:] = 0.25
    exp[3:, :3] = 0.25
    assert np.abs(emp - exp).max() < 0.02


def test_slice_increments_need_grid_endpoints():
    with pytest.raises(ValueError):
        slice_increments([(1, IntervalQ(0, Fraction(1, 3)))], 16, 2)


def test_is_psd():
    assert is_psd(np.eye(3))[0]
    assert not is_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))[0]
    assert not is_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))[0]


def _gauss(target, r, seed):
    return stream(seed, "gauss").multivariate_normal(np.zeros(len(target)), target, r)


def test_consistency_null_calibration():
    target = pairing_cov_matrix([(1, UNIT, UNIT), (1, LEFT, LEFT), (2, RIGHT, RIGHT)])
    passes = sum(consistency_test(_gauss(target, 200, s), target, 0.01).passed for s in range(60))
    assert passes >= 57


def test_consistency_power():
    target = np.array([[1.0, 0.3], [0.3, 2.0]])
    shifted = _gauss(target, 200, 1) + 0.5
    rep = consistency_test(shifted, target)
    assert not rep.check("mean").passed
    assert not consistency_test(_gauss(2 * target, 200, 2), target).check("covariance").passed
    skew = stream(3, "skew").standard_exponential((400, 2)) - 1
    assert not consistency_test(skew, np.eye(2)).check("moments").passed


def test_consistency_input_checks():
    with pytest.raises(ValueError):
        consistency_test(np.zeros((50, 1)), [[1.0]])
    with pytest.raises(ValueError):
        consistency_test(np.zeros((200, 2)), np.eye(3))
    with pytest.raises(ValueError):
        consistency_test(np.zeros((200, 2)), [[1.0, 2.0], [2.0, 1.0]])
    rep = consistency_test(_gauss(np.eye(2), 200, 4), np.diag([1.0, 0.0]))
    assert not rep.passed and "degenerate" in rep.check("covariance").note


def test_consistency_on_nonbacktracking_functionals():
    n, r = 40, 200
    x = np.array([I_half(B_nl_apply(sample_wigner(n, seed=("nb", k)), 1, UNIT), UNIT) for k in range(r)])
    # the rectangle-increment variance is 2 (both orientations of every edge)
    assert consistency_test(x, [[float(pairing_cov(1, UNIT, UNIT, 1, UNIT, UNIT))]]).passed
    assert not consistency_test(x, [[float(psi_cov(1, UNIT, 1, UNIT))]]).passed
