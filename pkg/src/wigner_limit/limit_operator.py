"""Finite truncations of the limiting Hilbert space and its operator W.

Basis elements are indicators 1_{P_i} of registered intervals and slice
vectors psi_{l,i} with 1 <= l <= L.  Coefficients are ``Fraction`` and the
default Gram entries are rational, so identities hold exactly.

    W(1_P)     = psi_{1,P}
    W(psi_k,P) = beta_{k+1} 1_P + psi_{k+1,P} - beta_k psi_{1,P}
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .gaussian_fields import psi_cov
from .grid_spaces import IntervalQ
from .moment_combinatorics import beta


class LevelOverflow(ValueError):
    """The image would need a psi level above the truncation."""


@dataclass(frozen=True, order=True)
class BasisElement:
    kind: str  # "ind" or "psi"
    i: int
    l: int = 0

    def __post_init__(self):
        if self.kind == "ind":
            if self.l != 0:
                raise ValueError("indicators carry no level")
        elif self.kind == "psi":
            if self.l < 1:
                raise ValueError("psi level must be at least 1")
        else:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    def __str__(self) -> str:
        return f"1[{self.i}]" if self.kind == "ind" else f"psi{self.l}[{self.i}]"


def ind(i: int) -> BasisElement:
    return BasisElement("ind", i)


def psi(l: int, i: int) -> BasisElement:
    return BasisElement("psi", i, l)


class SymbolicVector:
    """Sparse finite combination of basis elements with exact coefficients."""

    __slots__ = ("_c",)

    def __init__(self, coeffs: dict[BasisElement, object] | Iterable = ()):
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        c: dict[BasisElement, Fraction] = {}
        for e, v in items:
            v = Fraction(v)
            if v:
                c[e] = c.get(e, Fraction(0)) + v
        self._c = {e: v for e, v in c.items() if v}

    @classmethod
    def of(cls, e: BasisElement, c=1) -> "SymbolicVector":
        return cls({e: c})

    @property
    def coeffs(self) -> dict[BasisElement, Fraction]:
        return dict(self._c)

    def __iter__(self):
        return iter(sorted(self._c.items()))

    def __bool__(self) -> bool:
        return bool(self._c)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymbolicVector) and self._c == other._c

    def __hash__(self):
        return hash(frozenset(self._c.items()))

    def __add__(self, other: "SymbolicVector") -> "SymbolicVector":
        return SymbolicVector(list(self._c.items()) + list(other._c.items()))

    def __neg__(self) -> "SymbolicVector":
        return SymbolicVector({e: -v for e, v in self._c.items()})

    def __sub__(self, other: "SymbolicVector") -> "SymbolicVector":
        return self + (-other)

    def __mul__(self, c) -> "SymbolicVector":
        c = Fraction(c)
        return SymbolicVector({e: c * v for e, v in self._c.items()})

    __rmul__ = __mul__

    def max_level(self) -> int:
        return max((e.l for e in self._c if e.kind == "psi"), default=0)

    def __repr__(self) -> str:
        if not self._c:
            return "0"
        return " + ".join(f"{v}*{e}" for e, v in self)


ZERO = SymbolicVector()


class GramContext:
    """Registered intervals, truncation level L and the cached Gram entries.

    ``cov`` gives <psi_{l1,P1}, psi_{l2,P2}>; it defaults to the closed form
    and can be swapped (e.g. for Monte Carlo estimates), which is recorded in
    ``cov_source``.
    """

    def __init__(
        self,
        intervals: Sequence[IntervalQ],
        L: int,
        cov: Callable[[int, IntervalQ, int, IntervalQ], object] | None = None,
        cov_source: str = "closed-form",
    ):
        if L < 1:
            raise ValueError("L must be at least 1")
        self.intervals = tuple(intervals)
        if not self.intervals:
            raise ValueError("register at least one interval")
        self.L = L
        self._cov = cov or psi_cov
        self.cov_source = cov_source if cov else "closed-form"
        self._cache: dict[tuple[BasisElement, BasisElement], object] = {}

    def index(self, P: IntervalQ) -> int:
        try:
            return self.intervals.index(P)
        except ValueError:
            raise KeyError(f"interval {P} is not registered") from None

    def check(self, e: BasisElement) -> None:
        if not 0 <= e.i < len(self.intervals):
            raise KeyError(f"{e} refers to an unregistered interval")
        if e.kind == "psi" and e.l > self.L:
            raise KeyError(f"{e} exceeds truncation level {self.L}")

    def entry(self, e: BasisElement, f: BasisElement):
        key = (e, f) if e <= f else (f, e)
        if key in self._cache:
            return self._cache[key]
        self.check(e)
        self.check(f)
        Pe, Pf = self.intervals[e.i], self.intervals[f.i]
        if e.kind == "ind" and f.kind == "ind":
            val = Pe.overlap(Pf)
        elif e.kind != f.kind:
            val = Fraction(0)
        else:
            val = self._cov(e.l, Pe, f.l, Pf)
        self._cache[key] = val
        return val

    def basis(self, max_level: int | None = None) -> list[BasisElement]:
        L = self.L if max_level is None else max_level
        k = len(self.intervals)
        return [ind(i) for i in range(k)] + [psi(l, i) for l in range(1, L + 1) for i in range(k)]

    def gram_matrix(self, elements: Sequence[BasisElement]) -> np.ndarray:
        return np.array([[float(self.entry(e, f)) for f in elements] for e in elements])


def gram(u: SymbolicVector, v: SymbolicVector, ctx: GramContext):
    total = Fraction(0)
    for e, a in u:
        for f, b in v:
            total = total + a * b * ctx.entry(e, f)
    return total


def apply_W(v: SymbolicVector, ctx: GramContext, scale=1) -> SymbolicVector:
    out: list[tuple[BasisElement, Fraction]] = []
    s = Fraction(scale)
    for e, c in v:
        ctx.check(e)
        if e.kind == "ind":
            out.append((psi(1, e.i), s * c))
            continue
        k = e.l
        if k + 1 > ctx.L:
            raise LevelOverflow(f"W({e}) needs psi level {k + 1} > L={ctx.L}")
        out.append((ind(e.i), s * c * beta(k + 1)))
        out.append((psi(k + 1, e.i), s * c))
        out.append((psi(1, e.i), -s * c * beta(k)))
    return SymbolicVector(out)


def apply_W_power(v: SymbolicVector, l: int, ctx: GramContext) -> SymbolicVector:
    for _ in range(l):
        v = apply_W(v, ctx)
    return v


def power_identity_check(P, l: int, ctx: GramContext) -> SymbolicVector:
    """W^l(1_P) - (beta_l 1_P + psi_{l,P}); the zero vector when the identity holds."""
    if l < 1:
        raise ValueError("l must be at least 1")
    if l > ctx.L:
        raise LevelOverflow(f"l={l} exceeds truncation level {ctx.L}")
    i = P if isinstance(P, int) else ctx.index(P)
    lhs = apply_W_power(SymbolicVector.of(ind(i)), l, ctx)
    rhs = SymbolicVector({ind(i): beta(l), psi(l, i): 1})
    return lhs - rhs


def spectral_moments(f: SymbolicVector, L: int, ctx: GramContext) -> list:
    """<f, W^l f> for l = 1..L; f must be a combination of indicators."""
    if any(e.kind != "ind" for e, _ in f):
        raise ValueError("spectral_moments takes indicator combinations only")
    if L > ctx.L:
        raise LevelOverflow(f"L={L} exceeds truncation level {ctx.L}")
    out = []
    v = f
    for _ in range(L):
        v = apply_W(v, ctx)
        out.append(gram(f, v, ctx))
    return out


def self_adjoint_residual(ctx: GramContext, max_level: int | None = None) -> float:
    """max |<u, Wv> - <Wu, v>| over basis pairs whose images stay registered."""
    L = ctx.L - 1 if max_level is None else max_level
    els = ctx.basis(L)
    images = {e: apply_W(SymbolicVector.of(e), ctx) for e in els}
    worst = Fraction(0)
    for a, e in enumerate(els):
        u = SymbolicVector.of(e)
        for f in els[a:]:
            v = SymbolicVector.of(f)
            worst = max(worst, abs(Fraction(gram(u, images[f], ctx)) - Fraction(gram(images[e], v, ctx))))
    return float(worst)


def gram_psd(ctx: GramContext, tol: float = 1e-9) -> tuple[bool, float]:
    g = ctx.gram_matrix(ctx.basis())
    lo = float(np.linalg.eigvalsh(g).min())
    return lo >= -tol, lo


@dataclass(frozen=True)
class NormProbe:
    estimate: float
    level: int
    domain_rank: int


def action_matrix(ctx: GramContext, L: int, scale=1) -> tuple[np.ndarray, list, list]:
    """Matrix of W from span(levels <= L-1) into span(levels <= L)."""
    dom = ctx.basis(L - 1)
    cod = ctx.basis(L)
    pos = {e: k for k, e in enumerate(cod)}
    m = np.zeros((len(cod), len(dom)))
    for j, e in enumerate(dom):
        for f, c in apply_W(SymbolicVector.of(e), ctx, scale):
            m[pos[f], j] = float(c)
    return m, dom, cod


def operator_norm_symbolic(ctx: GramContext, L: int | None = None, scale=1, tol: float = 1e-9) -> NormProbe:
    """Largest value of ||W x|| / ||x|| over the truncated domain, Gram geometry.

    Indicators of overlapping intervals are linearly dependent, so the Gram
    matrix of the domain is singular; the ratio is maximized on its range.
    """
    L = ctx.L if L is None else L
    if L < 2:
        raise ValueError("L must be at least 2")
    if L > ctx.L:
        raise LevelOverflow(f"L={L} exceeds truncation level {ctx.L}")
    m, dom, cod = action_matrix(ctx, L, scale)
    gd = ctx.gram_matrix(dom)
    gc = ctx.gram_matrix(cod)
    for g in (gd, gc):
        lo = float(np.linalg.eigvalsh(g).min())
        if lo < -tol:
            raise ValueError(f"Gram matrix not PSD (min eigenvalue {lo:.3g})")
    lam, u = np.linalg.eigh(gd)
    keep = lam > tol * max(1.0, lam.max())
    b = u[:, keep] / np.sqrt(lam[keep])
    h = b.T @ m.T @ gc @ m @ b
    top = float(np.linalg.eigvalsh((h + h.T) / 2).max())
    return NormProbe(math.sqrt(max(top, 0.0)), L, int(keep.sum()))


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def write_moment_table(path, ctx: GramContext, L: int | None = None) -> None:
    L = ctx.L if L is None else L
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "l", "moment", "beta_l_times_length"])
        for i, P in enumerate(ctx.intervals):
            ms = spectral_moments(SymbolicVector.of(ind(i)), L, ctx)
            for l, m in enumerate(ms, start=1):
                w.writerow([str(P), l, str(m), str(beta(l) * P.length)])


def export_matrices(path, ctx: GramContext, L: int | None = None) -> None:
    L = ctx.L if L is None else L
    m, dom, cod = action_matrix(ctx, L)
    data = {
        "intervals": [str(P) for P in ctx.intervals],
        "L": L,
        "cov_source": ctx.cov_source,
        "domain": [str(e) for e in dom],
        "codomain": [str(e) for e in cod],
        "action": m.tolist(),
        "gram": ctx.gram_matrix(cod).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
