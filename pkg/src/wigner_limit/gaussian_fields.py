"""Brownian paths and sheets on grids, the Gamma_l fields, and their covariances.

Two different second-moment objects appear here and are easy to confuse:

* :func:`psi_cov` is the L^2 inner product of two slice set functions
  d(Gamma_l(x, b) - Gamma_l(x, a)) / sqrt(dx), i.e. the quadratic covariation
  of the slice paths.  :func:`mc_psi_cov` is its Monte Carlo oracle.
* :func:`pairing_cov` is the covariance of two rectangle increments of
  Gamma_l (the sqrt(dx)-pairings over Q), which is what finite-n
  I-functionals converge to.  The symmetrization makes it pick up both
  Q x P and P x Q overlaps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ._rng import stream
from .grid_spaces import IntervalQ
from .moment_combinatorics import stem_coeff, stems, wick_moment

# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridPath:
    """B(i/n), i = 0..n; ``values`` may carry leading batch axes."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[-1] != self.n + 1:
            raise ValueError("path needs n + 1 values")
        if np.any(v[..., 0] != 0.0):
            raise ValueError("path must start at 0")
        object.__setattr__(self, "values", v)

    def at(self, x) -> np.ndarray:
        """Value at the grid point floor(x n) / n."""
        return self.values[..., math.floor(Fraction(x) * self.n)]


def _path_from_increments(inc: np.ndarray) -> GridPath:
    vals = np.concatenate([np.zeros(inc.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)], axis=-1)
    return GridPath(inc.shape[-1], vals)


def sample_bm(n: int, seed=0, count: int | None = None) -> GridPath:
    """Brownian motion on the grid: cumulative sum of i.i.d. N(0, 1/n).

    ``count`` draws that many independent paths along a leading axis.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    shape = (n,) if count is None else (count, n)
    inc = stream(seed, "bm").standard_normal(shape) / math.sqrt(n)
    return _path_from_increments(inc)


def donsker_path(xs) -> GridPath:
    """W(i/n) = (x_1 + ... + x_i) / sqrt(n) for the last axis of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    return _path_from_increments(xs / math.sqrt(xs.shape[-1]))


def dyadic_qv(path: GridPath, level: int, P: IntervalQ | None = None) -> np.ndarray:
    """Sum of squared increments over the 2^level dyadic cells of P (default (0,1])."""
    P = P or IntervalQ(0, 1)
    pts = [P.a + P.length * Fraction(j, 2 ** level) for j in range(2 ** level + 1)]
    idx = []
    for t in pts:
        k = t * path.n
        if k.denominator != 1:
            raise ValueError("dyadic points must lie on the path grid")
        idx.append(int(k))
    v = path.values[..., idx]
    return np.sum(np.diff(v, axis=-1) ** 2, axis=-1)


# ---------------------------------------------------------------------------
# Sheets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridSheet:
    """B(i/n, j/n), i, j = 0..n; ``values`` may carry leading batch axes."""

    n: int
    values: np.ndarray

    def at(self, x, y) -> np.ndarray:
        i = math.floor(Fraction(x) * self.n)
        j = math.floor(Fraction(y) * self.n)
        return self.values[..., i, j]

    def rect(self, X: IntervalQ, Y: IntervalQ) -> np.ndarray:
        """Rectangle increment B(X x Y)."""
        return self.at(X.b, Y.b) - self.at(X.a, Y.b) - self.at(X.b, Y.a) + self.at(X.a, Y.a)


def sample_sheet(n: int, seed=0, count: int | None = None, key="sheet") -> GridSheet:
    """Brownian sheet from i.i.d. N(0, 1/n^2) cells by 2-D cumulative summation."""
    if n < 1:
        raise ValueError("n must be at least 1")
    shape = (n, n) if count is None else (count, n, n)
    cells = stream(seed, key).standard_normal(shape) / n
    v = np.zeros(cells.shape[:-2] + (n + 1, n + 1))
    v[..., 1:, 1:] = np.cumsum(np.cumsum(cells, axis=-1), axis=-2)
    return GridSheet(n, v)


def sheet_bank(n: int, ms: Sequence[int], seed=0, count: int | None = None) -> dict[int, GridSheet]:
    """One independent sheet per stem index m, shared by every level that uses it."""
    return {m: sample_sheet(n, seed, count, key=("sheet", m)) for m in sorted(set(ms))}


@dataclass(frozen=True)
class GammaSpec:
    l: int
    coeffs: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("l must be at least 1")
        if not self.coeffs:
            object.__setattr__(self, "coeffs", {m: stem_coeff(self.l, m) for m in stems(self.l)})

    @property
    def sheets(self) -> list[int]:
        return sorted(self.coeffs)


def psi_increment(spec: GammaSpec, P: IntervalQ, Q: IntervalQ, bank: Mapping[int, GridSheet]) -> np.ndarray:
    """Rectangle increment of Gamma_l over Q x P (x in Q, y in P).

    Gamma_l = (C_l + C_l') / sqrt2 with C_l'(x, y) = C_l(y, x), so the
    increment is (C_l(Q x P) + C_l(P x Q)) / sqrt2.
    """
    missing = [m for m in spec.sheets if m not in bank]
    if missing:
        raise KeyError(f"sheet bank lacks sheets {missing}")
    tot = 0.0
    for m, a in spec.coeffs.items():
        s = bank[m]
        tot = tot + float(a) * (s.rect(Q, P) + s.rect(P, Q))
    return tot / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Closed-form covariances
# ---------------------------------------------------------------------------


def _shared_stem_weight(l1: int, l2: int) -> Fraction:
    if (l1 - l2) % 2:
        return Fraction(0)
    return sum((stem_coeff(l1, m) * stem_coeff(l2, m) for m in stems(min(l1, l2))), Fraction(0))


def psi_cov(l1: int, P1: IntervalQ, l2: int, P2: IntervalQ) -> Fraction:
    """<psi_{l1,P1}, psi_{l2,P2}> = sum_m a(l1,m) a(l2,m) |P1 n P2|."""
    return _shared_stem_weight(l1, l2) * P1.overlap(P2)


def pairing_cov(
    l1: int, P1: IntervalQ, Q1: IntervalQ, l2: int, P2: IntervalQ, Q2: IntervalQ
) -> Fraction:
    """Cov of the Gamma rectangle increments over Q1 x P1 and Q2 x P2."""
    w = _shared_stem_weight(l1, l2)
    return w * (Q1.overlap(Q2) * P1.overlap(P2) + Q1.overlap(P2) * P1.overlap(Q2))


def psi_cov_matrix(items: Sequence[tuple[int, IntervalQ]]) -> np.ndarray:
    return np.array([[float(psi_cov(l1, p1, l2, p2)) for l2, p2 in items] for l1, p1 in items])


def pairing_cov_matrix(items: Sequence[tuple[int, IntervalQ, IntervalQ]]) -> np.ndarray:
    return np.array(
        [[float(pairing_cov(l1, p1, q1, l2, p2, q2)) for l2, p2, q2 in items] for l1, p1, q1 in items]
    )


def is_psd(mat, tol: float = 1e-9) -> tuple[bool, float]:
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T, atol=tol, rtol=0.0):
        return False, -math.inf
    lo = float(np.linalg.eigvalsh(mat).min())
    return lo >= -tol, lo


# ---------------------------------------------------------------------------
# Monte Carlo oracle for psi_cov
# ---------------------------------------------------------------------------


def _atoms(intervals: Sequence[IntervalQ]) -> list[IntervalQ]:
    pts = sorted({p for P in intervals for p in (P.a, P.b)} | {Fraction(0), Fraction(1)})
    return [IntervalQ(a, b) for a, b in zip(pts, pts[1:])]


def block_sums(s_p: int, s_q: int, sigma: float, rng: np.random.Generator, count: int):
    """Row and column sums of an s_p x s_q block of i.i.d. N(0, sigma^2) cells.

    Drawn exactly without the block: rows are sigma sqrt(s_q) (a - mean a) + T/s_p,
    columns sigma sqrt(s_p) (b - mean b) + T/s_q, T ~ N(0, s_p s_q sigma^2).
    """
    a = rng.standard_normal((count, s_p))
    b = rng.standard_normal((count, s_q))
    t = rng.standard_normal((count, 1)) * sigma * math.sqrt(s_p * s_q)
    rows = sigma * math.sqrt(s_q) * (a - a.mean(axis=1, keepdims=True)) + t / s_p
    cols = sigma * math.sqrt(s_p) * (b - b.mean(axis=1, keepdims=True)) + t / s_q
    return rows, cols


def slice_increments(
    items: Sequence[tuple[int, IntervalQ]], n: int, count: int, seed=0
) -> np.ndarray:
    """Grid increments of the slice paths x -> Gamma_l(x, b) - Gamma_l(x, a).

    Returns shape (count, len(items), n).  Interval endpoints must lie on the
    grid; sheets are resolved only through the row/column block sums each
    slice needs, so the cost is O(n) per sheet and replica.
    """
    atoms = _atoms([P for _, P in items])
    for A in atoms:
        if (A.a * n).denominator != 1 or (A.b * n).denominator != 1:
            raise ValueError("interval endpoints must lie on the grid")
    ranges = [A.grid_range(n) for A in atoms]
    ms = sorted({m for l, _ in items for m in stems(l)})
    sigma = 1.0 / n
    out = np.zeros((count, len(items), n))
    for m in ms:
        rng = stream(seed, "slice-sheet", m)
        # rowpart[q][:, i] = sum over cells (i, j), j in atom q;  colpart[p][:, j] likewise
        rowpart = [np.zeros((count, n)) for _ in atoms]
        colpart = [np.zeros((count, n)) for _ in atoms]
        for p, rp in enumerate(ranges):
            for q, rq in enumerate(ranges):
                rows, cols = block_sums(len(rp), len(rq), sigma, rng, count)
                rowpart[q][:, rp.start - 1:rp.stop - 1] = rows
                colpart[p][:, rq.start - 1:rq.stop - 1] = cols
        for k, (l, P) in enumerate(items):
            if (l - m) % 2 or m > l:
                continue
            inside = [q for q, A in enumerate(atoms) if P.a <= A.a and A.b <= P.b]
            # x-cell i: B_m(cell x P) + B_m(P x cell)
            d = sum(rowpart[q] for q in inside) + sum(colpart[q] for q in inside)
            out[:, k, :] += float(stem_coeff(l, m)) * d
    return out / math.sqrt(2.0)


@dataclass(frozen=True)
class MCCov:
    estimate: np.ndarray
    se: np.ndarray
    replicas: int
    n: int


def mc_psi_cov(
    items: Sequence[tuple[int, IntervalQ]], n: int = 2 ** 13, replicas: int = 2000, seed=0, chunk: int = 250
) -> MCCov:
    """Quadratic covariation of slice paths, averaged over replicas."""
    k = len(items)
    acc = []
    done = 0
    while done < replicas:
        c = min(chunk, replicas - done)
        inc = slice_increments(items, n, c, seed=_chunk_seed(seed, done))
        acc.append(np.einsum("rai,rbi->rab", inc, inc))
        done += c
    qv = np.concatenate(acc).reshape(replicas, k, k)
    return MCCov(qv.mean(axis=0), qv.std(axis=0, ddof=1) / math.sqrt(replicas), replicas, n)


def _chunk_seed(seed, offset: int):
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(
        0 if seed is None else int(seed)
    )
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (offset,))


# ---------------------------------------------------------------------------
# Consistency tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_abs_z: float
    critical: float
    max_abs_dev: float
    tests: int
    note: str = ""


@dataclass(frozen=True)
class ConsistencyReport:
    replicas: int
    alpha: float
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        return next(c for c in self.checks if c.name == name)


def _zscores(est, target, se) -> np.ndarray:
    dev = np.abs(est - target)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(se > 0, dev / se, np.where(dev > 1e-12, np.inf, 0.0))


def _moment_index(k: int, max_order: int) -> list[tuple[int, ...]]:
    return [c for order in range(3, max_order + 1) for c in itertools.combinations_with_replacement(range(k), order)]


@dataclass(frozen=True)
class _NullModel:
    """Targets and null standard errors of every entry, from Wick moments."""

    idx: list
    cov_se: np.ndarray
    mean_se: np.ndarray
    mom_target: np.ndarray
    mom_se: np.ndarray

    @classmethod
    def of(cls, target: np.ndarray, r: int, max_order: int) -> "_NullModel":
        k = target.shape[0]
        iu = np.triu_indices(k)
        cov_var = target[iu[0], iu[0]] * target[iu[1], iu[1]] + target[iu] ** 2
        idx = _moment_index(k, max_order)
        mom = np.array([wick_moment(target, c) for c in idx])
        mom_var = np.array([wick_moment(target, c + c) for c in idx]) - mom ** 2
        return cls(
            idx,
            np.sqrt(np.clip(cov_var, 0, None) / r),
            np.sqrt(np.clip(np.diag(target), 0, None) / r),
            mom,
            np.sqrt(np.clip(mom_var, 0, None) / r),
        )


def _statistics(x: np.ndarray, target: np.ndarray, null: _NullModel) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-entry (z-score, absolute deviation), standard errors from the null model."""
    r, k = x.shape
    out = {}
    m = x.mean(axis=0)
    out["mean"] = (_zscores(m, 0.0, null.mean_se), np.abs(m))
    iu = np.triu_indices(k)
    xc = x - m
    est = (xc[:, iu[0]] * xc[:, iu[1]]).sum(axis=0) / (r - 1)
    out["covariance"] = (_zscores(est, target[iu], null.cov_se), np.abs(est - target[iu]))
    if null.idx:
        est = np.stack([np.prod(x[:, list(c)], axis=1) for c in null.idx], axis=1).mean(axis=0)
        out["moments"] = (_zscores(est, null.mom_target, null.mom_se), np.abs(est - null.mom_target))
    return out


_NULL_CACHE: dict = {}


def _null_critical(target: np.ndarray, null: _NullModel, r: int, level: float, draws: int, seed) -> dict[str, float]:
    """(1 - level) quantile of each check's max |z| under exact Gaussian draws."""
    key = (target.tobytes(), target.shape, r, len(null.idx), level, draws, seed)
    if key in _NULL_CACHE:
        return _NULL_CACHE[key]
    k = target.shape[0]
    lam, u = np.linalg.eigh(target)
    root = u * np.sqrt(np.clip(lam, 0.0, None))
    rng = stream(seed, "consistency-null", k, r, len(null.idx))
    maxima: dict[str, list[float]] = {}
    for _ in range(draws):
        x = rng.standard_normal((r, k)) @ root.T
        for name, (z, _dev) in _statistics(x, target, null).items():
            maxima.setdefault(name, []).append(float(z.max()))
    crit = {name: float(np.quantile(v, 1 - level)) for name, v in maxima.items()}
    _NULL_CACHE[key] = crit
    return crit


def consistency_test(
    samples, target, alpha: float = 0.01, max_order: int = 4, null_draws: int = 2000, seed=0
) -> ConsistencyReport:
    """Compare replicated functionals with a centered Gaussian target.

    ``samples`` is (replicas, k).  Three checks: the mean vector against 0,
    covariance entries against ``target``, and raw moments of order
    3..max_order against the Gaussian (Wick) values.  Each check uses the
    max |z| over its entries, with standard errors computed under the
    target (also by Wick's formula), so heavy tails in the data do not widen
    the gate.  The critical value is the 1 - alpha/3 quantile of that
    statistic over ``null_draws`` simulated Gaussian samples of the same
    size; the overall level is at most alpha.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    r, k = x.shape
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if r < 100:
        raise ValueError("consistency_test needs at least 100 replicas")
    if target.shape != (k, k):
        raise ValueError("target shape does not match samples")
    ok, lo = is_psd(target)
    if not ok:
        raise ValueError(f"target is not PSD (min eigenvalue {lo:.3g})")

    null = _NullModel.of(target, r, max_order)
    crit = _null_critical(target, null, r, alpha / 3, null_draws, seed)
    degenerate = (np.diag(target) <= 1e-12) & (x.var(axis=0) > 1e-12)
    checks = []
    for name, (z, dev) in _statistics(x, target, null).items():
        zmax = float(z.max()) if z.size else 0.0
        note = ""
        passed = zmax <= crit[name]
        if name == "covariance" and np.any(degenerate):
            note = f"degenerate target with non-degenerate samples at {np.flatnonzero(degenerate).tolist()}"
            passed = False
        checks.append(CheckResult(name, bool(passed), zmax, crit[name], float(dev.max()) if dev.size else 0.0, int(z.size), note))
    return ConsistencyReport(r, alpha, tuple(checks))
