"""Walk sums of Wigner kernels: powers, the V1/V2/V3 split, simple-path sums.

Every enumeration routine is exact and refuses inputs above a hard budget
(``n <= 40`` for ``l <= 3``, ``n <= 16`` for ``l = 4`` by default).  Grid
indices follow :mod:`grid_spaces`: ``xi_nb`` takes 1-based ``i, j``; arrays
are 0-based.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ensembles import EntryLaw, KernelOp, WignerSample, apply_kernel, get_law
from .grid_spaces import IntervalQ, StepFunction, indicator_on_grid
from .moment_combinatorics import beta, stem_coeff, stems


class BudgetError(ValueError):
    """Enumeration would exceed the configured hard cap."""


DEFAULT_CAPS = {1: 40, 2: 40, 3: 40, 4: 16}


def check_budget(n: int, l: int, caps: dict[int, int] | None = None) -> None:
    caps = DEFAULT_CAPS if caps is None else caps
    if l < 1:
        raise ValueError("l must be at least 1")
    cap = caps.get(l)
    if cap is None or n > cap:
        raise BudgetError(f"enumeration for n={n}, l={l} is above the cap ({cap})")


def _mask(P: IntervalQ, n: int) -> np.ndarray:
    return P.grid_mask(n).astype(float)


def apply_power(K, f: StepFunction, l: int) -> StepFunction:
    if l < 0:
        raise ValueError("l must be non-negative")
    if isinstance(K, WignerSample):
        K = KernelOp.from_sample(K)
    for _ in range(l):
        f = apply_kernel(K, f)
    return f


def _walk_tensor(a: np.ndarray, l: int) -> np.ndarray:
    """T[j0, ..., jl] = prod_k a[j_(k-1), j_k], by broadcasting."""
    n = a.shape[0]
    t = a
    for k in range(2, l + 1):
        t = t[..., None] * a.reshape((1,) * (k - 1) + (n, n))
    return t


# ---------------------------------------------------------------------------
# V1 / V2 / V3
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VDecomposition:
    l: int
    P: IntervalQ
    V1: StepFunction
    V2: StepFunction
    V3: StepFunction

    def total(self) -> StepFunction:
        return self.V1 + self.V2 + self.V3


def _rgs(length: int):
    """Restricted growth strings of the given length, first entry 0."""

    def rec(prefix, top):
        if len(prefix) == length:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from rec(prefix + [b], max(top, b))

    yield from rec([0], 0)


def _falling(x: int, k: int) -> int:
    return math.prod(range(x, x - k, -1)) if k > 0 else 1


def open_walk_mean_coeffs(l: int, law) -> list[tuple[int, Fraction]]:
    """(k, c_k) pairs with E[sum over open walks from i ending at a fixed j != i]
    = sum_k c_k (n-2)_(k-2), before the n^(-l/2) scaling.

    Walks are grouped by the pattern of coinciding vertices (a set partition
    of positions 0..l); each pattern's mean is a product of law moments over
    its distinct edges, loops included.
    """
    law = get_law(law)
    acc: dict[int, Fraction] = {}
    for shape in _rgs(l + 1):
        if shape[-1] == 0:
            continue
        mult = Counter(
            (min(shape[k], shape[k + 1]), max(shape[k], shape[k + 1])) for k in range(l)
        )
        e = Fraction(1)
        for d in mult.values():
            e *= law.moment(d)
            if e == 0:
                break
        if e:
            # block 0 is i, the last block is the fixed endpoint j
            k = max(shape) + 1
            acc[k] = acc.get(k, Fraction(0)) + e
    return sorted(acc.items())


def v3_exact(n: int, P: IntervalQ, l: int, law) -> StepFunction:
    """Mean of the open-walk part of K^l(1_P), exactly from the law's moments."""
    coeffs = open_walk_mean_coeffs(l, law)
    per_end = sum(float(c) * _falling(n - 2, k - 2) for k, c in coeffs if k - 2 <= n - 2)
    m = P.grid_mask(n)
    ends = m.sum() - m.astype(float)  # |P| - 1[i in P]
    return StepFunction(per_end * ends / n ** (l / 2))


def v_decompose(
    w: WignerSample,
    P: IntervalQ,
    l: int,
    method: str = "enumerate",
    law=None,
    caps: dict[int, int] | None = None,
) -> VDecomposition:
    """Split K^l(1_P) into closed-walk (V1), centered open (V2) and mean open (V3) parts.

    ``method="enumerate"`` sums over all walks and is budget-capped;
    ``"matrix"`` uses matrix powers and has no cap.  ``law`` defaults to the
    sample's own law and only affects V3.
    """
    n = w.n
    if l < 1:
        raise ValueError("l must be at least 1")
    law = get_law(law if law is not None else w.law)
    a = w.matrix
    p = _mask(P, n)
    if method == "enumerate":
        check_budget(n, l, caps)
        t = _walk_tensor(a, l).reshape(n, -1, n)
        closed = np.einsum("iki->i", t)
        ends = t.sum(axis=1)
    elif method == "matrix":
        ends = np.linalg.matrix_power(a, l)
        closed = np.diag(ends).copy()
    else:
        raise ValueError(f"unknown method {method!r}")
    v1 = closed * p
    open_part = ends @ p - closed * p
    v3 = v3_exact(n, P, l, law)
    v2 = open_part - v3.values
    return VDecomposition(l, P, StepFunction(v1), StepFunction(v2), v3)


def v1_error_sq(d: VDecomposition) -> float:
    """||V1 - beta_l 1_P||^2 in L^2(mu_n)."""
    r = d.V1.values - float(beta(d.l)) * d.P.grid_mask(d.V1.n)
    return float(r @ r) / r.size


def sq_norm(f: StepFunction) -> float:
    return float(f.values @ f.values) / f.n


# ---------------------------------------------------------------------------
# Signed non-backtracking lines
# ---------------------------------------------------------------------------


def xi_nb(w: WignerSample, i: int, j: int, l: int, caps=None) -> float:
    """Sum over simple paths i -> j with l steps of prod x / sqrt(n) (1-based i, j)."""
    n = w.n
    check_budget(n, l, caps)
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError("indices outside 1..n")
    if i == j:
        return 0.0
    a = w.matrix
    i0, j0 = i - 1, j - 1
    others = [v for v in range(n) if v != i0 and v != j0]
    total = 0.0
    for mid in itertools.permutations(others, l - 1):
        path = (i0, *mid, j0)
        prod = 1.0
        for s, t in zip(path, path[1:]):
            prod *= a[s, t]
        total += prod
    return total


def _distinct_mask(n: int, l: int) -> np.ndarray:
    ax = [np.arange(n).reshape((1,) * k + (n,) + (1,) * (l - k)) for k in range(l + 1)]
    ok = np.ones((n,) * (l + 1), dtype=bool)
    for s, t in itertools.combinations(range(l + 1), 2):
        ok &= ax[s] != ax[t]
    return ok


def xi_matrix(w: WignerSample, l: int, caps=None) -> np.ndarray:
    """Matrix of xi(i, j) over all pairs (0-based), by full enumeration."""
    n = w.n
    check_budget(n, l, caps)
    t = _walk_tensor(w.matrix, l) * _distinct_mask(n, l)
    return t.reshape(n, -1, n).sum(axis=1)


def B_nl_apply(w: WignerSample, l: int, P: IntervalQ, caps=None) -> StepFunction:
    """(1/n) sum_{j in P} n xi(i, j) = sum_{j in P} xi(i, j)."""
    return StepFunction(xi_matrix(w, l, caps) @ _mask(P, w.n))


def aggregated_X(w: WignerSample, Q: IntervalQ, P: IntervalQ, l: int, caps=None) -> float:
    """n^(-(l+1)/2) times the sum of prod x over simple paths from Q to P."""
    xi = xi_matrix(w, l, caps)
    return float(_mask(Q, w.n) @ xi @ _mask(P, w.n)) / math.sqrt(w.n)


def fast_simple_path_sum(w: WignerSample, Q: IntervalQ, P: IntervalQ, l: int) -> float:
    """Closed form of :func:`aggregated_X` for l <= 3 by inclusion-exclusion.

    With a0 = x off its diagonal, walks of a0 already avoid i_k = i_(k+1);
    the remaining coincidences are removed explicitly.
    """
    if l not in (1, 2, 3):
        raise ValueError("closed form available for l in {1, 2, 3} only")
    n = w.n
    a0 = w.entries.copy()
    np.fill_diagonal(a0, 0.0)
    q, p = _mask(Q, n), _mask(P, n)
    ap = a0 @ p
    if l == 1:
        s = q @ ap
    elif l == 2:
        a2 = a0 @ a0
        s = q @ (a0 @ ap) - np.sum(q * p * np.diag(a2))
    else:
        a2 = a0 @ a0
        d = np.diag(a2)
        aq = a0 @ q
        s = (
            q @ (a2 @ ap)
            - np.sum(q * d * ap)  # i0 = i2
            - np.sum(aq * d * p)  # i1 = i3
            - np.sum(q * p * np.einsum("ij,ji->i", a2, a0))  # i0 = i3
            + q @ (a0 ** 3) @ p  # i0 = i2 and i1 = i3
        )
    return float(s) / n ** ((l + 1) / 2)


def simple_path_sum(w: WignerSample, Q: IntervalQ, P: IntervalQ, l: int, caps=None) -> float:
    """Closed form where available, otherwise capped enumeration."""
    if l <= 3:
        return fast_simple_path_sum(w, Q, P, l)
    return aggregated_X(w, Q, P, l, caps)


# ---------------------------------------------------------------------------
# Variance matching
# ---------------------------------------------------------------------------


def v2_aggregate(d: VDecomposition, Q: IntervalQ) -> float:
    """n^(-1/2) sum over i in Q of V2(i/n)."""
    n = d.V2.n
    return float(d.V2.values @ _mask(Q, n)) / math.sqrt(n)


def stem_combination(w: WignerSample, Q: IntervalQ, P: IntervalQ, l: int, caps=None) -> float:
    """sum over stems m of a(l, m) X_{Q,m,P}."""
    return sum(float(stem_coeff(l, m)) * simple_path_sum(w, Q, P, m, caps) for m in stems(l))


def indicator(P: IntervalQ, n: int) -> StepFunction:
    return indicator_on_grid(P, n)


__all__ = [
    "BudgetError",
    "DEFAULT_CAPS",
    "EntryLaw",
    "VDecomposition",
    "apply_power",
    "aggregated_X",
    "B_nl_apply",
    "check_budget",
    "fast_simple_path_sum",
    "indicator",
    "open_walk_mean_coeffs",
    "simple_path_sum",
    "sq_norm",
    "stem_combination",
    "v1_error_sq",
    "v2_aggregate",
    "v3_exact",
    "v_decompose",
    "xi_matrix",
    "xi_nb",
]
