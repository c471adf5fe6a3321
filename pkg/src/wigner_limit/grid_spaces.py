"""Step functions on the grid {1/n, ..., n/n} and set functions on (a, b].

Endpoint convention: the grid points of an interval (a, b] are the indices
``floor(a n) + 1, ..., floor(b n)`` (1-based).  Index ``i`` owns the cell
((i-1)/n, i/n], so the indicator of a grid-aligned interval embeds back onto
exactly that interval.

Interval endpoints are kept as ``Fraction``; floats appear only in the
final arithmetic of an evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10 ** 12)
    return Fraction(x)


@dataclass(frozen=True, order=True)
class IntervalQ:
    """Half-open interval (a, b] with rational endpoints in [0, 1]."""

    a: Fraction
    b: Fraction

    def __init__(self, a, b):
        a, b = _frac(a), _frac(b)
        if not (0 <= a < b <= 1):
            raise ValueError(f"need 0 <= a < b <= 1, got ({a}, {b}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def parse(cls, text: str) -> "IntervalQ":
        """Accept ``"(0,1/2]"``, ``"0,1/2"`` or ``"0:1/2"``."""
        t = text.strip().lstrip("(").rstrip("]").replace(":", ",")
        a, b = (s.strip() for s in t.split(","))
        return cls(Fraction(a), Fraction(b))

    @property
    def length(self) -> Fraction:
        return self.b - self.a

    def overlap(self, other: "IntervalQ") -> Fraction:
        return max(Fraction(0), min(self.b, other.b) - max(self.a, other.a))

    def grid_range(self, n: int) -> range:
        """1-based grid indices i with floor(a n) < i <= floor(b n)."""
        return range(math.floor(self.a * n) + 1, math.floor(self.b * n) + 1)

    def grid_mask(self, n: int) -> np.ndarray:
        r = self.grid_range(n)
        mask = np.zeros(n, dtype=bool)
        mask[r.start - 1:r.stop - 1] = True
        return mask

    def __str__(self) -> str:
        return f"({self.a},{self.b}]"


UNIT = IntervalQ(0, 1)


@dataclass(frozen=True)
class GridIndex:
    n: int
    i: int

    def __post_init__(self):
        if not 1 <= self.i <= self.n:
            raise ValueError(f"grid index {self.i} outside 1..{self.n}")

    @property
    def point(self) -> Fraction:
        return Fraction(self.i, self.n)


class StepFunction:
    """Values f(i/n), i = 1..n, with the L^2(mu_n) geometry."""

    __slots__ = ("_values",)

    def __init__(self, values):
        v = np.array(values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("a step function needs a non-empty 1-d value array")
        if not np.all(np.isfinite(v)):
            raise ValueError("step function values must be finite")
        v.setflags(write=False)
        self._values = v

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return self._values.size

    @classmethod
    def constant(cls, n: int, c: float = 1.0) -> "StepFunction":
        return cls(np.full(n, float(c)))

    def _check(self, other: "StepFunction") -> None:
        if other.n != self.n:
            raise ValueError(f"resolution mismatch: {self.n} vs {other.n}")

    def __add__(self, other: "StepFunction") -> "StepFunction":
        self._check(other)
        return StepFunction(self._values + other._values)

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        self._check(other)
        return StepFunction(self._values - other._values)

    def __mul__(self, c: float) -> "StepFunction":
        return StepFunction(self._values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "StepFunction":
        return StepFunction(-self._values)

    def __repr__(self) -> str:
        return f"StepFunction(n={self.n})"


def l2_norm_mun(f: StepFunction) -> float:
    return math.sqrt(float(np.dot(f.values, f.values)) / f.n)


def inner_mun(f: StepFunction, g: StepFunction) -> float:
    if f.n != g.n:
        raise ValueError(f"resolution mismatch: {f.n} vs {g.n}")
    return float(np.dot(f.values, g.values)) / f.n


def indicator_on_grid(P: IntervalQ, n: int) -> StepFunction:
    if n < 1:
        raise ValueError("n must be positive")
    return StepFunction(P.grid_mask(n).astype(float))


def I_half(f: StepFunction, P: IntervalQ) -> float:
    """Discrete sqrt(dx)-integral: sum of f over the grid points of P, times n^-1/2."""
    r = P.grid_range(f.n)
    return float(np.sum(f.values[r.start - 1:r.stop - 1])) / math.sqrt(f.n)


# ---------------------------------------------------------------------------
# Set functions
# ---------------------------------------------------------------------------


class SetFunction:
    """A rule (a, b] -> real, for rational non-degenerate intervals."""

    KINDS = ("embedded-L2", "fractional-derivative", "linear-combination")

    __slots__ = ("_rule", "kind")

    def __init__(self, rule: Callable[[IntervalQ], float], kind: str):
        if kind not in self.KINDS:
            raise ValueError(f"unknown set-function kind {kind!r}")
        self._rule = rule
        self.kind = kind

    def __call__(self, P: IntervalQ) -> float:
        return float(self._rule(P))

    def __add__(self, other: "SetFunction") -> "SetFunction":
        return SetFunction(lambda P: self(P) + other(P), "linear-combination")

    def __sub__(self, other: "SetFunction") -> "SetFunction":
        return SetFunction(lambda P: self(P) - other(P), "linear-combination")

    def __mul__(self, c: float) -> "SetFunction":
        c = float(c)
        return SetFunction(lambda P: c * self(P), "linear-combination")

    __rmul__ = __mul__


def step_antiderivative(f: StepFunction) -> Callable[[Fraction], float]:
    """x -> integral of f over (0, x], exact in the grid geometry."""
    n = f.n
    cums = np.concatenate(([0.0], np.cumsum(f.values)))

    def F(x) -> float:
        x = _frac(x)
        xn = x * n
        k = min(math.floor(xn), n)
        partial = float(xn - k) * f.values[k] if k < n else 0.0
        return (cums[k] + partial) / n

    return F


def embed_L2(f, antiderivative: Callable | None = None) -> SetFunction:
    """Averaged-increment set function (a, b] -> (1/(b-a)) * integral_a^b f.

    ``f`` is a :class:`StepFunction` (integral exact from the grid), or a
    callable; for a callable pass ``antiderivative`` when known, otherwise
    the integral is done by adaptive quadrature.
    """
    if isinstance(f, StepFunction):
        F = step_antiderivative(f)
    elif antiderivative is not None:
        F = lambda x: float(antiderivative(x))
    else:
        F = lambda x: integrate.quad(f, 0.0, float(x), limit=200)[0]

    def rule(P: IntervalQ) -> float:
        return (F(P.b) - F(P.a)) / float(P.length)

    return SetFunction(rule, "embedded-L2")


def alpha_derivative(F: Callable, alpha: float) -> SetFunction:
    """(a, b] -> (F(b) - F(a)) / (b - a)^alpha, for 0 < alpha <= 1."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")

    def rule(P: IntervalQ) -> float:
        return (float(F(P.b)) - float(F(P.a))) / float(P.length) ** alpha

    kind = "embedded-L2" if alpha == 1 else "fractional-derivative"
    return SetFunction(rule, kind)


# ---------------------------------------------------------------------------
# Partition limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    points: tuple[Fraction, ...]

    def __init__(self, points: Sequence):
        pts = tuple(_frac(p) for p in points)
        if len(pts) < 2 or any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("partition points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def dyadic(cls, P: IntervalQ, level: int) -> "Partition":
        k = 2 ** level
        return cls([P.a + P.length * Fraction(j, k) for j in range(k + 1)])

    @property
    def mesh(self) -> Fraction:
        return max(b - a for a, b in zip(self.points, self.points[1:]))

    def cells(self) -> list[IntervalQ]:
        return [IntervalQ(a, b) for a, b in zip(self.points, self.points[1:])]


def dyadic_partitions(P: IntervalQ, levels) -> list[Partition]:
    return [Partition.dyadic(P, k) for k in levels]


def partition_sum(F: SetFunction, G: SetFunction, part: Partition) -> float:
    cells = part.cells()
    fv = np.array([F(c) for c in cells])
    gv = fv if G is F else np.array([G(c) for c in cells])
    w = np.array([float(c.length) for c in cells])
    return float(np.sum(fv * gv * w))


def _check_meshes(partitions: Sequence[Partition]) -> list[Fraction]:
    meshes = [p.mesh for p in partitions]
    if not meshes:
        raise ValueError("need at least one partition")
    if any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise ValueError("partition meshes must be strictly decreasing")
    return meshes


@dataclass(frozen=True)
class InnerReport:
    meshes: tuple[float, ...]
    estimates: tuple[float, ...]
    limit: float
    converged: bool
    tol: float


def setfunc_inner(
    F: SetFunction, G: SetFunction, partitions: Sequence[Partition], tol: float = 1e-3
) -> InnerReport:
    """Partition sums sum_j F(cell_j) G(cell_j) |cell_j| along a refining sequence.

    ``converged`` is set when the last two estimates differ by less than
    ``tol``; a non-converging pair is reported, not guessed at.
    """
    meshes = _check_meshes(partitions)
    est = [partition_sum(F, G, p) for p in partitions]
    conv = len(est) >= 2 and abs(est[-1] - est[-2]) < tol
    return InnerReport(tuple(float(m) for m in meshes), tuple(est), est[-1], conv, tol)


def decay_exponent(meshes: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(value) against log(mesh)."""
    m = np.log(np.asarray(meshes, dtype=float))
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        return math.inf
    return float(np.polyfit(m, np.log(v), 1)[0])


@dataclass(frozen=True)
class ZeroReport:
    meshes: tuple[float, ...]
    estimates: tuple[float, ...]
    exponent: float
    verdict: str


def is_equivalent_zero(
    F: SetFunction,
    partitions: Sequence[Partition],
    tol: float = 1e-3,
    min_exponent: float = 0.4,
) -> ZeroReport:
    """Does sum_j F(cell_j)^2 |cell_j| go to zero along the partitions?

    Verdict is ``"zero-equivalent"`` when the last estimate is below ``tol``
    or the estimates decay like mesh^p with fitted p >= ``min_exponent``.
    """
    rep = setfunc_inner(F, F, partitions, tol)
    est = rep.estimates
    p = decay_exponent(rep.meshes, est) if len(est) >= 2 else 0.0
    zero = abs(est[-1]) < tol or (len(est) >= 2 and p >= min_exponent)
    return ZeroReport(rep.meshes, est, p, "zero-equivalent" if zero else "not-zero")


def interval_pairing(F: SetFunction, part: Partition, power: float = 1.0) -> float:
    """sum_j F(cell_j) |cell_j|^power -- the (dx)^power Riemann sum over ``part``."""
    return float(sum(F(c) * float(c.length) ** power for c in part.cells()))
