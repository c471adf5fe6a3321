import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wigner_limit.grid_spaces import IntervalQ
from wigner_limit.limit_operator import (
    ZERO,
    BasisElement,
    GramContext,
    LevelOverflow,
    SymbolicVector,
    apply_W,
    export_matrices,
    gram,
    gram_psd,
    ind,
    operator_norm_symbolic,
    power_identity_check,
    psi,
    self_adjoint_residual,
    spectral_moments,
    write_moment_table,
)
from wigner_limit.moment_combinatorics import beta

HALF = Fraction(1, 2)
UNIT = IntervalQ(0, 1)
LEFT = IntervalQ(0, HALF)
RIGHT = IntervalQ(HALF, 1)
MIDDLE = IntervalQ(Fraction(1, 4), Fraction(3, 4))
FAMILY = (UNIT, LEFT, RIGHT, MIDDLE)


@pytest.fixture
def ctx():
    return GramContext(FAMILY, 6)


def test_basis_validation():
    with pytest.raises(ValueError):
        BasisElement("ind", 0, 2)
    with pytest.raises(ValueError):
        BasisElement("psi", 0, 0)
    with pytest.raises(ValueError):
        BasisElement("foo", 0)
    with pytest.raises(ValueError):
        GramContext((), 2)


def test_gram_examples(ctx):
    assert gram(SymbolicVector.of(ind(1)), SymbolicVector.of(ind(3)), ctx) == Fraction(1, 4)
    assert gram(SymbolicVector.of(ind(0)), SymbolicVector.of(psi(1, 0)), ctx) == 0
    assert gram(SymbolicVector.of(psi(3, 0)), SymbolicVector.of(psi(3, 0)), ctx) == 5
    with pytest.raises(KeyError):
        ctx.entry(ind(9), ind(0))
    with pytest.raises(KeyError):
        ctx.index(IntervalQ(0, Fraction(1, 3)))


def test_apply_W_examples(ctx):
    assert apply_W(SymbolicVector.of(ind(2)), ctx) == SymbolicVector.of(psi(1, 2))
    assert apply_W(SymbolicVector.of(psi(1, 2)), ctx) == SymbolicVector({ind(2): 1, psi(2, 2): 1})
    assert apply_W(ZERO, ctx) == ZERO
    with pytest.raises(LevelOverflow):
        apply_W(SymbolicVector.of(psi(6, 0)), ctx)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5), st.fractions(max_denominator=20)), max_size=8),
       st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5), st.fractions(max_denominator=20)), max_size=8),
       st.fractions(max_denominator=9))
def test_apply_W_linear(u, v, c):
    ctx = GramContext(FAMILY, 6)

    def vec(items):
        return SymbolicVector([(ind(i) if l == 0 else psi(l, i), a) for i, l, a in items])

    U, V = vec(u), vec(v)
    assert apply_W(U + c * V, ctx) == apply_W(U, ctx) + c * apply_W(V, ctx)


@pytest.mark.parametrize("l", [1, 2, 3, 4, 5, 6])
def test_power_identity(ctx, l):
    for i in range(len(FAMILY)):
        assert power_identity_check(i, l, ctx) == ZERO
    assert power_identity_check(UNIT, l, ctx) == ZERO


def test_power_identity_overflow(ctx):
    with pytest.raises(LevelOverflow):
        power_identity_check(0, 7, ctx)


def test_spectral_moments(ctx):
    assert spectral_moments(SymbolicVector.of(ind(0)), 6, ctx) == [0, 1, 0, 2, 0, 5]
    assert spectral_moments(SymbolicVector.of(ind(1)), 6, ctx) == [beta(l) / 2 for l in range(1, 7)]
    both = SymbolicVector({ind(1): 1, ind(2): 1})
    assert spectral_moments(both, 6, ctx) == [beta(l) for l in range(1, 7)]
    with pytest.raises(ValueError):
        spectral_moments(SymbolicVector.of(psi(1, 0)), 2, ctx)


def test_self_adjoint_and_psd(ctx):
    assert self_adjoint_residual(ctx) <= 1e-9
    ok, lo = gram_psd(ctx)
    assert ok and lo >= -1e-9


def test_custom_covariance_is_recorded():
    c = GramContext((UNIT,), 2, cov=lambda l1, p1, l2, p2: 7, cov_source="mc")
    assert c.cov_source == "mc"
    assert c.entry(psi(1, 0), psi(2, 0)) == 7


def test_operator_norm(ctx):
    single = GramContext((UNIT,), 6)
    est2 = operator_norm_symbolic(single, 2).estimate
    assert 0 < est2 <= 3
    assert operator_norm_symbolic(single, 2, scale=2).estimate == pytest.approx(2 * est2)
    ests = [operator_norm_symbolic(ctx, L).estimate for L in range(2, 7)]
    assert all(b >= a - 1e-9 for a, b in zip(ests, ests[1:]))
    assert ests[-1] < 2
    with pytest.raises(ValueError):
        operator_norm_symbolic(ctx, 1)


def test_exports(tmp_path, ctx):
    write_moment_table(tmp_path / "m.csv", ctx, 4)
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 * len(FAMILY)
    export_matrices(tmp_path / "w.json", ctx, 3)
    data = json.loads((tmp_path / "w.json").read_text())
    g = np.array(data["gram"])
    assert g.shape == (len(data["codomain"]),) * 2
    assert np.allclose(g, g.T)
