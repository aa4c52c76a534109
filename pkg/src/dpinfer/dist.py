"""Discrete distributions, samples, histograms, profiles and distances.

Symbols are stored 0-based (``0..k-1``) everywhere inside the library.
The command line converts to and from 1-based symbol files.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    DimensionMismatch,
    InvalidParameter,
)

PROB_TOL = 1e-12


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over the alphabet ``{0, ..., k-1}``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs, float)
        if p.ndim != 1 or p.size < 1:
            raise InvalidParameter("probs must be a non-empty 1-d vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidParameter("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > PROB_TOL * max(1, p.size):
            raise InvalidParameter(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return int(self.probs.size)

    @classmethod
    def uniform(cls, k: int) -> "DiscreteDistribution":
        if k < 1:
            raise InvalidParameter("k must be >= 1")
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def from_weights(cls, w) -> "DiscreteDistribution":
        w = np.asarray(w, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise InvalidParameter("weights must be non-negative with positive sum")
        return cls(w / w.sum())

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())

    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs))

    def __eq__(self, other):
        return isinstance(other, DiscreteDistribution) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True)
class SampleSet:
    symbols: np.ndarray
    k: int

    def __post_init__(self):
        s = _frozen(self.symbols, np.int64).reshape(-1)
        if s.size and (s.min() < 0 or s.max() >= self.k):
            raise InvalidParameter(f"symbols must lie in [0, {self.k})")
        object.__setattr__(self, "symbols", s)

    @property
    def n(self) -> int:
        return int(self.symbols.size)

    def __len__(self):
        return self.n

    def histogram(self) -> "Histogram":
        return Histogram(np.bincount(self.symbols, minlength=self.k))

    def split(self, parts: int) -> list["SampleSet"]:
        """Split into ``parts`` contiguous pieces of (almost) equal length."""
        return [SampleSet(c, self.k) for c in np.array_split(self.symbols, parts)]


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray

    def __post_init__(self):
        c = _frozen(self.counts, np.int64).reshape(-1)
        if np.any(c < 0):
            raise InvalidParameter("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def k(self) -> int:
        return int(self.counts.size)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def profile(self) -> "Profile":
        return Profile(np.bincount(self.counts, minlength=self.n + 1))


@dataclass(frozen=True)
class Profile:
    """Counts of counts: ``phi[i]`` symbols appear exactly ``i`` times."""

    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", _frozen(self.phi, np.int64).reshape(-1))

    @property
    def n(self) -> int:
        return int((np.arange(self.phi.size) * self.phi).sum())

    @property
    def k(self) -> int:
        return int(self.phi.sum())

    @property
    def distinct(self) -> int:
        return int(self.phi[1:].sum())

    def to_histogram(self) -> Histogram:
        """A canonical histogram with this profile (sorted by multiplicity)."""
        return Histogram(np.repeat(np.arange(self.phi.size), self.phi))


class Divergence(str, Enum):
    TV = "TV"
    KL = "KL"
    CHI2 = "CHI2"
    L2 = "L2"


def _probs(p):
    return p.probs if isinstance(p, DiscreteDistribution) else np.asarray(p, dtype=float)


def divergence(p, q, kind="TV") -> float:
    a, b = _probs(p), _probs(q)
    if a.shape != b.shape:
        raise DimensionMismatch(f"alphabet sizes differ: {a.size} vs {b.size}")
    kind = Divergence(kind)
    if kind is Divergence.TV:
        return float(0.5 * np.abs(a - b).sum())
    if kind is Divergence.L2:
        return float(np.sqrt(((a - b) ** 2).sum()))
    bad = (b == 0) & (a > 0)
    if np.any(bad):
        raise AbsoluteContinuityViolation(f"q is zero where p is positive at {np.flatnonzero(bad)[:5]}")
    m = a > 0
    if kind is Divergence.KL:
        return float(max(0.0, (a[m] * np.log(a[m] / b[m])).sum()))
    m = b > 0
    return float(max(0.0, ((a[m] - b[m]) ** 2 / b[m]).sum()))


def hamming(x, y) -> int:
    a = x.symbols if isinstance(x, SampleSet) else np.asarray(x)
    b = y.symbols if isinstance(y, SampleSet) else np.asarray(y)
    if a.shape != b.shape:
        raise DimensionMismatch("samples differ in length")
    return int(np.count_nonzero(a != b))


def sample_symbols(probs: np.ndarray, size, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws; ``size`` may be an int or a shape."""
    cdf = np.cumsum(probs)
    u = rng.random(size)
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(idx, probs.size - 1)


def sample(p: DiscreteDistribution, n: int, rng: np.random.Generator) -> SampleSet:
    if n < 0:
        raise InvalidParameter("n must be >= 0")
    return SampleSet(sample_symbols(p.probs, int(n), rng), p.k)


def poissonized_sample(p: DiscreteDistribution, n: float, rng: np.random.Generator) -> SampleSet:
    if n < 0:
        raise InvalidParameter("rate must be >= 0")
    return sample(p, int(rng.poisson(n)), rng)


def project_to_simplex(v) -> DiscreteDistribution:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidParameter("entries must be finite")
    if np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-12:
        return DiscreteDistribution(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    # absorb rounding so the invariant holds to 1e-12
    w /= w.sum()
    return DiscreteDistribution(w)


# ---------------------------------------------------------------- generators


def paninski(k: int, alpha: float, z) -> DiscreteDistribution:
    """Perturbed uniform: pair ``i`` gets masses ``(1 +- 2*alpha*z_i)/k``."""
    if k % 2 or k < 2:
        raise InvalidParameter("paninski needs an even k >= 2")
    if not 0 <= alpha <= 0.5:
        raise InvalidParameter("alpha must lie in [0, 1/2]")
    z = np.asarray(z, dtype=float)
    if z.shape != (k // 2,) or not np.all(np.abs(z) == 1):
        raise InvalidParameter("z must be a +-1 vector of length k/2")
    p = np.empty(k)
    p[0::2] = (1 + 2 * alpha * z) / k
    p[1::2] = (1 - 2 * alpha * z) / k
    return DiscreteDistribution(p)


def random_sign_vector(m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(np.array([-1.0, 1.0]), size=m)


def entropy_lb_pair(k: int, eta: float) -> tuple[DiscreteDistribution, DiscreteDistribution]:
    """Pair with one heavy symbol whose mass drops from 2/3 to (2-eta)/3."""
    if k < 2 or not 0 <= eta <= 1:
        raise InvalidParameter("need k >= 2 and eta in [0, 1]")
    p = np.full(k, (1 / 3) / (k - 1))
    q = np.full(k, ((1 + eta) / 3) / (k - 1))
    p[0] = 2 / 3
    q[0] = (2 - eta) / 3
    return DiscreteDistribution(p), DiscreteDistribution(q)


def coverage_lb_pair(m: int, alpha: float) -> tuple[DiscreteDistribution, DiscreteDistribution]:
    """Uniform on m(1+alpha) symbols versus m light symbols plus one heavy extra symbol.

    The extra symbol is the last index of a common alphabet of size m(1+alpha)+1.
    """
    size = m * (1 + alpha)
    if m < 1 or alpha <= 0 or abs(size - round(size)) > 1e-9:
        raise InvalidParameter("m*(1+alpha) must be a positive integer")
    size = int(round(size))
    u1 = np.zeros(size + 1)
    u1[:size] = 1.0 / size
    u2 = np.zeros(size + 1)
    u2[:m] = 1.0 / size
    u2[size] = alpha / (1 + alpha)
    return DiscreteDistribution(u1 / u1.sum()), DiscreteDistribution(u2 / u2.sum())


def make_distribution(kind: str, **kw):
    """Named distribution families. Pair-valued kinds return a tuple."""
    if kind == "uniform":
        return DiscreteDistribution.uniform(int(kw["k"]))
    if kind == "zipf":
        k, s = int(kw["k"]), float(kw.get("s", 1.0))
        return DiscreteDistribution.from_weights(np.arange(1, k + 1, dtype=float) ** -s)
    if kind == "two_step":
        k = int(kw["k"])
        w = np.ones(k)
        w[k // 2:] = 3.0
        return DiscreteDistribution.from_weights(w)
    if kind == "dirichlet_draw":
        k, conc, rng = int(kw["k"]), float(kw.get("conc", 1.0)), kw["rng"]
        return DiscreteDistribution.from_weights(rng.dirichlet(np.full(k, conc)))
    if kind == "paninski":
        k, alpha = int(kw["k"]), float(kw["alpha"])
        z = kw.get("z")
        if z is None:
            z = random_sign_vector(k // 2, kw["rng"]) if "rng" in kw else np.ones(k // 2)
        return paninski(k, alpha, z)
    if kind == "entropy_lb_pair":
        return entropy_lb_pair(int(kw["k"]), float(kw["eta"]))
    if kind == "coverage_lb_pair":
        return coverage_lb_pair(int(kw["m"]), float(kw["alpha"]))
    if kind == "point":
        k, x = int(kw["k"]), int(kw.get("x", 0))
        p = np.zeros(k)
        p[x] = 1.0
        return DiscreteDistribution(p)
    raise InvalidParameter(f"unknown distribution kind {kind!r}")


def binary_entropy(x: float) -> float:
    if x <= 0 or x >= 1:
        return 0.0
    return float(-x * np.log(x) - (1 - x) * np.log1p(-x))
