import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wigner_limit._rng import stream
from wigner_limit.ensembles import (
    LAW_NAMES,
    EntryLaw,
    KernelOp,
    WignerSample,
    apply_kernel,
    dump_sample,
    expected_trace_moment,
    kernel_eigen_check,
    load_sample,
    operator_norm_estimate,
    sample_wigner,
    trace_moment,
    trace_moments,
)
from wigner_limit.grid_spaces import StepFunction
from wigner_limit.moment_combinatorics import beta


@pytest.mark.parametrize("law", LAW_NAMES)
def test_laws_are_standardized(law):
    L = EntryLaw(law)
    assert L.moment(0) == 1 and L.moment(1) == 0 and L.moment(2) == 1
    assert L.certified
    x = L.sample(stream(0, "law-test", law), 200000)
    se = math.sqrt(float(L.moment(4) - 1) / x.size)
    assert abs((x ** 2).mean() - 1) <= 4 * se
    assert abs(x.mean()) < 4 / math.sqrt(x.size)
    assert abs((x ** 3).mean() - float(L.moment(3))) < 4 * math.sqrt(float(L.moment(6)) / x.size)


def test_law_moments_closed_forms():
    assert [EntryLaw("gaussian").moment(d) for d in range(7)] == [1, 0, 1, 0, 3, 0, 15]
    assert EntryLaw("uniform-scaled").moment(4) == Fraction(9, 5)
    assert [EntryLaw("exponential-centered").moment(d) for d in range(6)] == [1, 0, 1, 2, 9, 44]
    assert not EntryLaw("exponential-centered").symmetric
    assert EntryLaw("rademacher").symmetric
    with pytest.raises(ValueError):
        EntryLaw("cauchy")


def test_sample_is_deterministic_and_symmetric():
    a = sample_wigner(30, "gaussian", seed=7)
    b = sample_wigner(30, "gaussian", seed=7)
    assert np.array_equal(a.entries, b.entries)
    assert np.array_equal(a.entries, a.entries.T)
    assert not np.array_equal(a.entries, sample_wigner(30, "gaussian", seed=8).entries)
    with pytest.raises(ValueError):
        a.entries[0, 0] = 1.0


def test_sample_rejects_asymmetric_entries():
    with pytest.raises(ValueError):
        WignerSample(2, np.array([[0.0, 1.0], [2.0, 0.0]]), 0, "gaussian")


def test_single_entry_mean():
    g = stream(11, "n1")
    vals = np.array([sample_wigner(1, "gaussian", rng=g).entries[0, 0] for _ in range(100000)])
    assert abs(vals.mean()) < 3 * 10 ** -2.5


def test_offdiagonal_variance():
    g = stream(12, "offdiag")
    vals = np.concatenate([sample_wigner(40, "gaussian", rng=g).entries[np.triu_indices(40, 1)] for _ in range(130)])
    assert vals.size > 1e5
    assert abs(vals.var() - 1) < 3 * math.sqrt(2 / vals.size)


def test_apply_kernel_examples():
    n = 16
    K = KernelOp(math.sqrt(n) * np.ones((n, n)))
    out = apply_kernel(K, StepFunction.constant(n))
    assert np.allclose(out.values, math.sqrt(n))
    w = sample_wigner(n, seed=1)
    assert np.all(apply_kernel(w, StepFunction(np.zeros(n))).values == 0)
    with pytest.raises(ValueError):
        apply_kernel(w, StepFunction.constant(n + 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10 ** 6))
def test_kernel_symmetric_and_matches_matrix(n, seed):
    w = sample_wigner(n, "uniform-scaled", seed=seed)
    K = KernelOp.from_sample(w)
    assert np.array_equal(K.kernel, K.kernel.T)
    f = StepFunction(stream(seed, "f").standard_normal(n))
    assert np.allclose(apply_kernel(K, f).values, w.matrix @ f.values, atol=1e-12)


def test_eigen_consistency():
    for seed in range(5):
        r = kernel_eigen_check(sample_wigner(48, seed=seed), shift=0.3, seed=seed)
        assert r.matrix_residual < 1e-10 and r.kernel_residual < 1e-8


def test_trace_moments_against_matrix_powers():
    w = sample_wigner(25, "exponential-centered", seed=4)
    a = w.matrix
    ref = [np.trace(np.linalg.matrix_power(a, l)) / 25 for l in range(1, 8)]
    assert np.allclose(trace_moments(w, 7), ref, atol=1e-12)
    assert trace_moment(w, 1) == pytest.approx(np.trace(w.entries) / 25 ** 1.5)


def _brute_expected(n, l, law):
    """E over every Rademacher matrix on n=3 (2^6 of them)."""
    iu = np.triu_indices(n)
    total = 0.0
    count = 0
    for signs in itertools.product((-1.0, 1.0), repeat=iu[0].size):
        x = np.zeros((n, n))
        x[iu] = signs
        x = x + np.triu(x, 1).T
        total += np.trace(np.linalg.matrix_power(x / math.sqrt(n), l)) / n
        count += 1
    return total / count


@pytest.mark.parametrize("l", [1, 2, 3, 4, 5, 6])
def test_expected_trace_moment_brute_force(l):
    assert expected_trace_moment(3, l, "rademacher") == pytest.approx(_brute_expected(3, l, "rademacher"), abs=1e-12)


def test_expected_trace_moment_limits():
    for l in range(1, 7):
        assert expected_trace_moment(4000, l, "gaussian") == pytest.approx(float(beta(l)), abs=0.02)
    # finite-n bias of the Rademacher l=4 moment is exactly -1/n
    assert expected_trace_moment(512, 4, "rademacher") == pytest.approx(2 - 1 / 512, abs=1e-12)


def test_trace_moment_means():
    for l, target in ((1, 0.0), (2, 1.0), (4, 2.0)):
        vals = [trace_moment(sample_wigner(256, seed=(l, r)), l) for r in range(40)]
        m, se = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(40)
        assert abs(m - target) <= 3 * se + abs(expected_trace_moment(256, l, "gaussian") - target)


def test_operator_norm_examples():
    n = 32
    assert operator_norm_estimate(KernelOp(n * np.eye(n))) == pytest.approx(1.0)
    assert operator_norm_estimate(KernelOp(np.zeros((n, n)))) == 0.0
    w = sample_wigner(256, seed=2)
    K = KernelOp.from_sample(w)
    est = operator_norm_estimate(K)
    assert operator_norm_estimate(2 * K) == pytest.approx(2 * est)
    assert est <= np.abs(np.linalg.eigvalsh(w.matrix)).max() + 1e-12
    assert 1.8 < est < 2.2


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_dump_round_trip(tmp_path, fmt):
    w = sample_wigner(9, "exponential-centered", seed=3)
    path = tmp_path / f"w.{fmt}"
    dump_sample(w, path, fmt)
    back = load_sample(path)
    assert np.array_equal(back.entries, w.entries)
    assert (back.n, back.law, back.seed) == (9, w.law, 3)
    with pytest.raises(ValueError):
        dump_sample(w, tmp_path / "x", "xml")
