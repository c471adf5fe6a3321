"""Replicated statistics shared by the harness and the acceptance suite.

Each function draws replica r from its own keyed stream, so a result depends
only on (seed, inputs) and not on loop order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._rng import _key
from .ensembles import sample_wigner, trace_moments
from .gaussian_fields import pairing_cov_matrix
from .grid_spaces import IntervalQ, I_half, StepFunction, indicator_on_grid
from .moment_combinatorics import beta
from .walk_sums import (
    apply_power,
    sq_norm,
    stem_combination,
    v1_error_sq,
    v2_aggregate,
    v_decompose,
)

HALF = Fraction(1, 2)
UNIT = IntervalQ(0, 1)
LEFT = IntervalQ(0, HALF)
RIGHT = IntervalQ(HALF, 1)
MIDDLE = IntervalQ(Fraction(1, 4), Fraction(3, 4))
FAMILY3 = (UNIT, LEFT, RIGHT)
FAMILY4 = (UNIT, LEFT, RIGHT, MIDDLE)


def replica_seed(seed, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(_key(0 if seed is None else seed), spawn_key=tuple(_key(p) for p in path))


def gate(value: float, target: float, se: float, k: float = 3.0, floor: float = 1e-9) -> tuple[bool, float]:
    """|value - target| <= max(k se, floor); returns (passed, threshold)."""
    thr = max(k * se, floor)
    return abs(value - target) <= thr, thr


@dataclass(frozen=True)
class MeanSE:
    mean: float
    se: float
    replicas: int

    @classmethod
    def of(cls, xs) -> "MeanSE":
        xs = np.asarray(xs, dtype=float)
        se = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else math.nan
        return cls(float(xs.mean()), se, int(xs.size))


def semicircle_moments(n: int, law: str, replicas: int, seed, lmax: int = 6) -> list[MeanSE]:
    vals = np.array(
        [trace_moments(sample_wigner(n, law, replica_seed(seed, "semicircle", law, n, r)), lmax) for r in range(replicas)]
    )
    return [MeanSE.of(vals[:, l]) for l in range(lmax)]


@dataclass(frozen=True)
class VStats:
    n: int
    l: int
    v1_err: MeanSE
    v3_sq: MeanSE
    max_reconstruction_error: float


def vdecomp_stats(n: int, l: int, P: IntervalQ, law: str, replicas: int, seed, method: str = "enumerate") -> VStats:
    e1, e3 = [], []
    worst = 0.0
    f = indicator_on_grid(P, n)
    for r in range(replicas):
        w = sample_wigner(n, law, replica_seed(seed, "vdecomp", law, n, l, r))
        d = v_decompose(w, P, l, method=method)
        e1.append(v1_error_sq(d))
        e3.append(sq_norm(d.V3))
        ref = apply_power(w, f, l)
        worst = max(worst, float(np.max(np.abs(d.total().values - ref.values))))
    return VStats(n, l, MeanSE.of(e1), MeanSE.of(e3), worst)


@dataclass(frozen=True)
class MatchStats:
    n: int
    l: int
    residual_ms: float
    v2_ms: float
    stem_ms: float
    exact_max_diff: float

    @property
    def ratio(self) -> float:
        return min(self.v2_ms, self.stem_ms) / self.residual_ms if self.residual_ms > 0 else math.inf


def variance_matching(n: int, l: int, Q: IntervalQ, P: IntervalQ, law: str, replicas: int, seed) -> MatchStats:
    a, b = [], []
    for r in range(replicas):
        w = sample_wigner(n, law, replica_seed(seed, "match", law, n, l, r))
        d = v_decompose(w, P, l, method="matrix")
        a.append(v2_aggregate(d, Q))
        b.append(stem_combination(w, Q, P, l))
    a, b = np.array(a), np.array(b)
    return MatchStats(
        n, l, float(np.mean((a - b) ** 2)), float(np.mean(a ** 2)), float(np.mean(b ** 2)), float(np.max(np.abs(a - b)))
    )


def i_functionals(
    n: int, items: Sequence[tuple[int, IntervalQ, IntervalQ]], law: str, replicas: int, seed
) -> np.ndarray:
    """I_half(K^l 1_P - beta_l 1_P, Q) for each (l, P, Q); shape (replicas, len(items))."""
    out = np.empty((replicas, len(items)))
    for r in range(replicas):
        w = sample_wigner(n, law, replica_seed(seed, "ifunc", law, n, r))
        a = w.matrix
        cache: dict = {}
        for k, (l, P, Q) in enumerate(items):
            key = (l, P)
            if key not in cache:
                p = P.grid_mask(n).astype(float)
                v = p
                for _ in range(l):
                    v = a @ v
                cache[key] = StepFunction(v - float(beta(l)) * p)
            out[r, k] = I_half(cache[key], Q)
    return out


@dataclass(frozen=True)
class CovCheck:
    estimate: np.ndarray
    se: np.ndarray
    target: np.ndarray
    z: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))


def covariance_check(samples: np.ndarray, target: np.ndarray, floor: float = 1e-9) -> CovCheck:
    """Entrywise covariance estimates with product-variance standard errors."""
    x = np.asarray(samples, dtype=float)
    r = x.shape[0]
    xc = x - x.mean(axis=0)
    prods = xc[:, :, None] * xc[:, None, :]
    est = prods.sum(axis=0) / (r - 1)
    se = prods.std(axis=0, ddof=1) / math.sqrt(r)
    z = (est - target) / np.maximum(se, floor / 3)
    return CovCheck(est, se, target, z)


def ifunc_targets(items: Sequence[tuple[int, IntervalQ, IntervalQ]]) -> np.ndarray:
    return pairing_cov_matrix(items)
