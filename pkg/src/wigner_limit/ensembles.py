"""Wigner samples, their kernel-operator view, and spectral probes.

A sample stores the raw symmetric entries ``x``.  The kernel on the grid is
K(i/n, j/n) = sqrt(n) x_ij acting by (Kf)(i/n) = (1/n) sum_j K(i/n, j/n) f(j/n),
so the effective matrix is x / sqrt(n).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._rng import stream
from .grid_spaces import StepFunction

# ---------------------------------------------------------------------------
# Entry laws
# ---------------------------------------------------------------------------


def _double_factorial(k: int) -> int:
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def _subfactorial(d: int) -> int:
    a, b = 1, 0  # !0, !1
    if d == 0:
        return 1
    for k in range(2, d + 1):
        a, b = b, (k - 1) * (a + b)
    return b


def _gaussian_moment(d: int) -> Fraction:
    return Fraction(0) if d % 2 else Fraction(_double_factorial(d - 1))


def _rademacher_moment(d: int) -> Fraction:
    return Fraction(0) if d % 2 else Fraction(1)


def _uniform_moment(d: int) -> Fraction:
    # uniform on [-sqrt3, sqrt3]: E x^d = 3^(d/2) / (d+1) for even d
    return Fraction(0) if d % 2 else Fraction(3 ** (d // 2), d + 1)


def _expc_moment(d: int) -> Fraction:
    # E (E - 1)^d for E ~ Exp(1) is the number of derangements of d items
    return Fraction(_subfactorial(d))


def _gaussian_draw(rng, size):
    return rng.standard_normal(size)


def _rademacher_draw(rng, size):
    return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0


def _uniform_draw(rng, size):
    return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size)


def _expc_draw(rng, size):
    return rng.standard_exponential(size) - 1.0


_LAWS = {
    "gaussian": (_gaussian_moment, _gaussian_draw),
    "rademacher": (_rademacher_moment, _rademacher_draw),
    "uniform-scaled": (_uniform_moment, _uniform_draw),
    # skewed law; not part of the symmetric family, used where odd moments matter
    "exponential-centered": (_expc_moment, _expc_draw),
}

LAW_NAMES = tuple(_LAWS)


@dataclass(frozen=True)
class EntryLaw:
    """A mean-0, variance-1 real entry distribution with exact moments."""

    name: str

    def __post_init__(self):
        if self.name not in _LAWS:
            raise ValueError(f"unknown entry law {self.name!r}; choose from {LAW_NAMES}")

    def moment(self, d: int) -> Fraction:
        if d < 0:
            raise ValueError("moment order must be non-negative")
        return _LAWS[self.name][0](d)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return _LAWS[self.name][1](rng, size)

    @property
    def symmetric(self) -> bool:
        return all(self.moment(d) == 0 for d in (1, 3, 5, 7))

    def moment_certificate(self, dmax: int = 40, c1: float = 1.0, c2: float = 1.0) -> bool:
        """E|x|^d <= (c1 d)^(c2 d) for d = 1..dmax.

        Absolute moments are bounded through E|x|^d <= sqrt(E x^(2d)).
        """
        for d in range(1, dmax + 1):
            even = self.moment(2 * d)
            if math.log(float(even)) / 2 > c2 * d * math.log(c1 * d) + 1e-12:
                return False
        return True

    @property
    def certified(self) -> bool:
        return self.moment_certificate()


def get_law(law) -> EntryLaw:
    return law if isinstance(law, EntryLaw) else EntryLaw(str(law))


# ---------------------------------------------------------------------------
# Samples and kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WignerSample:
    n: int
    entries: np.ndarray
    seed: object
    law: str

    def __post_init__(self):
        x = np.array(self.entries, dtype=float)
        if x.shape != (self.n, self.n):
            raise ValueError(f"entries must be {self.n}x{self.n}")
        if not np.array_equal(x, x.T):
            raise ValueError("entries must be symmetric")
        x.setflags(write=False)
        object.__setattr__(self, "entries", x)

    @property
    def matrix(self) -> np.ndarray:
        """x / sqrt(n)."""
        return self.entries / math.sqrt(self.n)


def sample_wigner(n: int, law="gaussian", seed=0, *, rng: np.random.Generator | None = None) -> WignerSample:
    """Symmetric n x n sample; upper triangle and diagonal i.i.d. from ``law``.

    The draw comes from the keyed stream ``(seed, "wigner")`` unless an
    explicit ``rng`` is given.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    law = get_law(law)
    g = rng if rng is not None else stream(seed, "wigner")
    iu = np.triu_indices(n)
    x = np.zeros((n, n))
    x[iu] = law.sample(g, iu[0].size)
    x = x + np.triu(x, 1).T
    return WignerSample(n, x, seed, law.name)


class KernelOp:
    """Kernel K(i/n, j/n) on the grid, acting through the mu_n average."""

    __slots__ = ("kernel", "sample")

    def __init__(self, kernel, sample: WignerSample | None = None):
        k = np.array(kernel, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("kernel must be a square array")
        k.setflags(write=False)
        self.kernel = k
        self.sample = sample

    @classmethod
    def from_sample(cls, w: WignerSample) -> "KernelOp":
        return cls(math.sqrt(w.n) * w.entries, w)

    @property
    def n(self) -> int:
        return self.kernel.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Effective matrix K / n."""
        return self.kernel / self.n

    def __mul__(self, c: float) -> "KernelOp":
        return KernelOp(self.kernel * float(c))

    __rmul__ = __mul__


def _as_kernel(K) -> KernelOp:
    return KernelOp.from_sample(K) if isinstance(K, WignerSample) else K


def apply_kernel(K, f: StepFunction) -> StepFunction:
    K = _as_kernel(K)
    if f.n != K.n:
        raise ValueError(f"resolution mismatch: kernel {K.n}, function {f.n}")
    return StepFunction(K.kernel @ f.values / K.n)


# ---------------------------------------------------------------------------
# Spectral probes
# ---------------------------------------------------------------------------


def trace_moments(w: WignerSample, lmax: int) -> np.ndarray:
    """(1/n) tr A^l for l = 1..lmax, A = x / sqrt(n).

    Only powers up to ceil(lmax/2) are formed; tr A^(a+b) = sum(A^a * A^b).
    """
    if lmax < 1:
        raise ValueError("lmax must be at least 1")
    a = w.matrix
    half = (lmax + 1) // 2
    pows = [None, a]
    for _ in range(2, half + 1):
        pows.append(pows[-1] @ a)
    out = np.empty(lmax)
    for l in range(1, lmax + 1):
        p = l // 2
        q = l - p
        out[l - 1] = np.trace(a) if l == 1 else np.sum(pows[p] * pows[q])
    return out / w.n


def trace_moment(w: WignerSample, l: int) -> float:
    return float(trace_moments(w, l)[l - 1])


def _set_partitions(length: int):
    """Restricted growth strings of the given length (first entry 0)."""

    def rec(prefix, top):
        if len(prefix) == length:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from rec(prefix + [b], max(top, b))

    yield from rec([0], 0)


def expected_trace_moment(n: int, l: int, law) -> float:
    """Exact E[(1/n) tr (x/sqrt n)^l] at finite n.

    Closed walks are grouped by which steps revisit a vertex; each group
    contributes (n)_k labelings times a product of the law's moments over
    its distinct edges (diagonal entries included).
    """
    if l < 1:
        raise ValueError("l must be at least 1")
    law = get_law(law)
    total = Fraction(0)
    for shape in _set_partitions(l):
        mult: dict = {}
        for k in range(l):
            s, t = shape[k], shape[(k + 1) % l]
            e = (s, t) if s <= t else (t, s)
            mult[e] = mult.get(e, 0) + 1
        e_val = Fraction(1)
        for d in mult.values():
            e_val *= law.moment(d)
            if not e_val:
                break
        if e_val:
            k = max(shape) + 1
            total += e_val * math.prod(range(n, n - k, -1))
    return float(total) / n ** (1 + l / 2)


def operator_norm_estimate(K, iterations: int = 300, seed=0) -> float:
    """Power-iteration estimate of the largest singular value of f -> Kf.

    For a symmetric kernel the ratio ||T^(k+1) v|| / ||T^k v|| never
    decreases in k, so more iterations can only raise the estimate.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    K = _as_kernel(K)
    t = K.matrix
    if not np.any(t):
        return 0.0
    v = stream(seed, "power-iteration").standard_normal(K.n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        u = t @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return est
        est = float(nu)
        v = u / nu
    return est


@dataclass(frozen=True)
class EigenCheck:
    eigenvalue: float
    matrix_residual: float
    kernel_residual: float
    iterations: int


def rayleigh_eigenpair(a: np.ndarray, shift: float, v0=None, tol: float = 1e-13, maxiter: int = 100):
    """Eigenpair of symmetric ``a`` near ``shift`` by Rayleigh-quotient iteration."""
    n = a.shape[0]
    v = np.ones(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    v /= np.linalg.norm(v)
    mu = float(shift)
    eye = np.eye(n)
    for it in range(1, maxiter + 1):
        try:
            y = np.linalg.solve(a - mu * eye, v)
        except np.linalg.LinAlgError:
            return mu, v, it  # shift is an eigenvalue to working precision
        v = y / np.linalg.norm(y)
        mu = float(v @ a @ v)
        if np.linalg.norm(a @ v - mu * v) < tol * max(1.0, abs(mu)):
            return mu, v, it
    return mu, v, maxiter


def kernel_eigen_check(w: WignerSample, shift: float = 0.5, seed=0) -> EigenCheck:
    """Eigenpair (lam, g) of x/sqrt(n); returns residuals of both equations.

    The kernel residual is ||K f - lam f||_{mu_n} for f(i/n) = sqrt(n) g(i).
    """
    a = w.matrix
    v0 = stream(seed, "eigen-start").standard_normal(w.n)
    lam, g, it = rayleigh_eigenpair(a, shift, v0)
    f = StepFunction(math.sqrt(w.n) * g)
    kf = apply_kernel(KernelOp.from_sample(w), f)
    diff = kf.values - lam * f.values
    return EigenCheck(
        lam,
        float(np.linalg.norm(a @ g - lam * g)),
        math.sqrt(float(diff @ diff) / w.n),
        it,
    )


# ---------------------------------------------------------------------------
# Dumps
# ---------------------------------------------------------------------------


def dump_sample(w: WignerSample, path, fmt: str = "csv") -> None:
    """Row-major matrix dump with a one-line JSON header (n, law, seed)."""
    header = json.dumps({"n": w.n, "law": w.law, "seed": w.seed})
    path = Path(path)
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write("# " + header + "\n")
            np.savetxt(fh, w.entries, delimiter=",", fmt="%.17g")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(header.encode() + b"\n")
            fh.write(np.ascontiguousarray(w.entries, dtype="<f8").tobytes())
    else:
        raise ValueError(f"unknown dump format {fmt!r}")


def load_sample(path) -> WignerSample:
    path = Path(path)
    with open(path, "rb") as fh:
        first = fh.readline()
        if first.startswith(b"# "):
            meta = json.loads(first[2:])
            x = np.loadtxt(fh, delimiter=",", ndmin=2)
        else:
            meta = json.loads(first)
            x = np.frombuffer(fh.read(), dtype="<f8").reshape(meta["n"], meta["n"])
    return WignerSample(meta["n"], x, meta["seed"], meta["law"])
