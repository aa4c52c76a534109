"""Private uniformity, identity and closeness testers.

The uniformity tester thresholds a sensitivity-one rescaling of the empirical
TV distance to uniform and releases one bit through the sigmoid mechanism.
Identity testing reduces to uniformity over ``6k`` symbols; closeness testing
uses a four-sample l1 statistic of sensitivity two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.stats import binom, poisson

from .constants import DEFAULT_CONSTANTS, Constants
from .dist import DiscreteDistribution, Histogram, SampleSet
from .errors import DimensionMismatch, EmptyHistogram, InsufficientSamples, InvalidParameter
from .mechanisms import PrivacyBudget, sigmoid_probability

NULL = "null_accepted"
ALT = "alternative"


@dataclass(frozen=True)
class TesterConfig:
    k: int
    alpha: float
    budget: PrivacyBudget
    constants: Constants = field(default_factory=lambda: DEFAULT_CONSTANTS)
    use_poisson: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidParameter("alpha must lie in (0, 1)")
        if self.k < 1:
            raise InvalidParameter("k must be >= 1")
        c = self.constants
        if min(c.c, c.C1, c.C2) <= 0:
            raise InvalidParameter("tester constants must be positive")

    @property
    def epsilon(self) -> float:
        return self.budget.effective_epsilon()


@dataclass(frozen=True)
class TestOutcome:
    decision: str
    statistic_value: float
    released_bit: int

    @property
    def accepted(self) -> bool:
        return self.decision == NULL


def _release(z: float, epsilon: float, rng) -> TestOutcome:
    bit = int(rng.random() < sigmoid_probability(z, epsilon))
    return TestOutcome(NULL if bit == 0 else ALT, float(z), bit)


# ------------------------------------------------------------------ uniformity


def _l1_numerator(counts: np.ndarray, n: int, k: int) -> int:
    """Integer sum of |k*M_x - n|; the statistic is this over 2nk."""
    return int(np.abs(k * counts.astype(np.int64) - n).sum())


def unif_statistic_S(hist: Histogram, k: int | None = None, n: int | None = None, exact: bool = False):
    """Empirical TV distance to uniform, ``1/2 sum |M_x/n - 1/k|``.

    ``n`` defaults to the histogram total; Poissonized callers pass the nominal
    rate instead. With ``exact`` the value is a :class:`Fraction`.
    """
    counts = hist.counts
    k = hist.k if k is None else k
    n = hist.n if n is None else n
    if n <= 0:
        raise EmptyHistogram("the statistic needs at least one sample")
    num = _l1_numerator(counts, n, k)
    if exact:
        return Fraction(num, 2 * n * k)
    return num / (2 * n * k)


def _poisson_cutoff(lam: float) -> int:
    # isf is NaN below ~1e-16; the ten extra terms carry negligible mass
    return int(poisson.isf(1e-15, lam)) + 10


@lru_cache(maxsize=256)
def mu_uniform(k: int, n: int, poissonized: bool = False) -> float:
    """Expectation of the uniformity statistic under U[k].

    By linearity this is ``k/2 * E|B/n - 1/k|`` for one symbol's count B, which
    is summed exactly over the binomial (or Poisson) law.
    """
    if n <= 0:
        raise InvalidParameter("n must be positive")
    if not poissonized:
        if n <= k:
            return (1.0 - 1.0 / k) ** n
        j = np.arange(n + 1)
        w = binom.pmf(j, n, 1.0 / k)
    else:
        lam = n / k
        j = np.arange(_poisson_cutoff(lam) + 1)
        w = poisson.pmf(j, lam)
    return float(k / 2 * (w * np.abs(j / n - 1.0 / k)).sum())


def mu_of(probs: np.ndarray, n: int, poissonized: bool = False) -> float:
    """Exact expectation of the uniformity statistic under an arbitrary law."""
    k = probs.size
    tot = 0.0
    for p, mult in zip(*np.unique(probs, return_counts=True)):
        if poissonized:
            j = np.arange(_poisson_cutoff(n * p) + 1)
            w = poisson.pmf(j, n * p)
        else:
            j = np.arange(n + 1)
            w = binom.pmf(j, n, p)
        tot += mult * (w * np.abs(j / n - 1.0 / k)).sum()
    return float(tot / 2)


def separation_scale(n: int, k: int, alpha: float) -> float:
    """``min{n^2/k^2, sqrt(n/k), 1/alpha}``: the gap profile for alpha-far inputs."""
    return min(n * n / (k * k), math.sqrt(n / k), 1.0 / alpha)


def z_regime(n: int, k: int, alpha: float) -> str:
    if n <= k:
        return "sparse"
    if n <= k / alpha**2:
        return "intermediate"
    return "dense"


def _z_scale_and_shift(n: int, k: int, alpha: float, c: float) -> tuple[float, float]:
    regime = z_regime(n, k, alpha)
    if regime == "sparse":
        return float(k), 0.5 * c * alpha**2 * n * n / (k * k)
    if regime == "intermediate":
        return float(n), 0.5 * c * alpha**2 * math.sqrt(n / k)
    return float(n), 0.5 * c * alpha


def unif_statistic_Z_from_hist(hist: Histogram, cfg: TesterConfig, n: int | None = None, exact: bool = False):
    k = cfg.k
    if k < 2:
        raise InvalidParameter("the uniformity statistic needs k >= 2")
    n = hist.n if n is None else n
    S = unif_statistic_S(hist, k, n, exact=exact)
    mu = mu_uniform(k, n, cfg.use_poisson)
    scale, shift = _z_scale_and_shift(n, k, cfg.alpha, cfg.constants.c)
    if exact:
        return Fraction(scale) * (S - Fraction(mu) - Fraction(shift))
    return scale * (S - mu - shift)


def unif_statistic_Z(samples: SampleSet, cfg: TesterConfig, n: int | None = None, exact: bool = False):
    """Regime-normalized uniformity statistic with sensitivity at most one.

    ``n`` is the nominal sample size; it defaults to ``len(samples)``.
    """
    hist = Histogram(np.bincount(samples.symbols, minlength=cfg.k))
    if hist.k != cfg.k:
        raise InvalidParameter("samples exceed the configured alphabet")
    return unif_statistic_Z_from_hist(hist, cfg, n, exact=exact)


def uniformity_test(samples: SampleSet, cfg: TesterConfig, rng, n: int | None = None) -> TestOutcome:
    """Release Bern(sigmoid(eps * Z)); a zero bit accepts uniformity."""
    if cfg.k == 1:
        return TestOutcome(NULL, 0.0, 0)
    z = unif_statistic_Z(samples, cfg, n)
    return _release(z, cfg.epsilon, rng)


# -------------------------------------------------------------------- identity


@dataclass(frozen=True)
class IdentityMap:
    """Randomized map sending draws from q to uniform draws over ``6k`` buckets."""

    q: DiscreteDistribution
    mixed: np.ndarray  # (q + U)/2
    own: np.ndarray  # number of buckets owned by each symbol
    start: np.ndarray  # first bucket of each symbol
    residual_start: int
    n_buckets: int

    @classmethod
    def build(cls, q: DiscreteDistribution) -> "IdentityMap":
        k = q.k
        total = 6 * k
        mixed = 0.5 * (q.probs + 1.0 / k)
        # the tolerance guards exact integers against rounding down
        own = np.floor(total * mixed + 1e-9).astype(np.int64)
        start = np.concatenate(([0], np.cumsum(own)[:-1]))
        return cls(q, mixed, own, start, int(own.sum()), total)

    @property
    def keep_probability(self) -> np.ndarray:
        return np.minimum(1.0, self.own / (self.n_buckets * self.mixed))

    def pushforward(self, p: DiscreteDistribution) -> np.ndarray:
        """Exact law of the output bucket when inputs follow ``p``."""
        pm = 0.5 * (p.probs + 1.0 / p.k)
        keep = self.keep_probability
        out = np.zeros(self.n_buckets)
        for x in range(p.k):
            if self.own[x]:
                out[self.start[x]:self.start[x] + self.own[x]] = pm[x] * keep[x] / self.own[x]
        n_res = self.n_buckets - self.residual_start
        if n_res:
            out[self.residual_start:] = (pm * (1 - keep)).sum() / n_res
        return out

    def apply(self, symbols: np.ndarray, rng) -> np.ndarray:
        k = self.q.k
        symbols = np.asarray(symbols, dtype=np.int64)
        m = symbols.size
        u_mix, u_keep, u_bucket = rng.random(m), rng.random(m), rng.random(m)
        replace = rng.integers(0, k, size=m)
        x = np.where(u_mix < 0.5, symbols, replace)
        keep = u_keep < self.keep_probability[x]
        own_pick = self.start[x] + np.floor(u_bucket * self.own[x]).astype(np.int64)
        n_res = self.n_buckets - self.residual_start
        res_pick = self.residual_start + np.floor(u_bucket * max(n_res, 1)).astype(np.int64)
        return np.where(keep, own_pick, res_pick)


def identity_reduce(q: DiscreteDistribution, samples: SampleSet, rng) -> SampleSet:
    if samples.k != q.k:
        raise InvalidParameter("samples and q use different alphabets")
    imap = IdentityMap.build(q)
    return SampleSet(imap.apply(samples.symbols, rng), imap.n_buckets)


def identity_config(cfg: TesterConfig) -> TesterConfig:
    return TesterConfig(6 * cfg.k, cfg.alpha / 3, cfg.budget, cfg.constants, cfg.use_poisson)


def identity_test(q: DiscreteDistribution, samples: SampleSet, cfg: TesterConfig, rng) -> TestOutcome:
    if q.k == 1:
        return TestOutcome(NULL, 0.0, 0)
    reduced = identity_reduce(q, samples, rng)
    return uniformity_test(reduced, identity_config(cfg), rng)


# ------------------------------------------------------------------- closeness


# One substitution moves two counts of one histogram, and each count sits in
# two absolute-value terms, so the statistic can move by 4.
CLOSENESS_SENSITIVITY = 4


def closeness_statistic_Z(X: Histogram, Xt: Histogram, Y: Histogram, Yt: Histogram) -> int:
    a, at, b, bt = (h.counts.astype(np.int64) for h in (X, Xt, Y, Yt))
    if not (a.shape == at.shape == b.shape == bt.shape):
        raise DimensionMismatch("histograms must share an alphabet")
    return int((np.abs(a - b) + np.abs(at - bt) - np.abs(a - at) - np.abs(b - bt)).sum())


def _closeness_split(samples: SampleSet, cfg: TesterConfig, rng) -> tuple[Histogram, Histogram, float]:
    n = samples.n
    if n < 2:
        raise InsufficientSamples("closeness testing needs at least two samples per source")
    half = n // 2
    if cfg.use_poisson:
        # Poisson sizes with mean 0.9*half; rare overflow is truncated
        sizes = np.minimum(rng.poisson(0.9 * half, size=2), half)
        first = samples.symbols[: sizes[0]]
        second = samples.symbols[half: half + sizes[1]]
        nominal = 0.9 * half
    else:
        first, second = samples.symbols[:half], samples.symbols[half: 2 * half]
        nominal = half
    k = cfg.k
    return (
        Histogram(np.bincount(first, minlength=k)),
        Histogram(np.bincount(second, minlength=k)),
        nominal,
    )


def closeness_shift(n_per_set: float, cfg: TesterConfig) -> float:
    c = cfg.constants
    eps = cfg.epsilon
    return c.C1 * math.sqrt(n_per_set) + (0.0 if math.isinf(eps) else c.C2 / eps)


def closeness_test(samplesP: SampleSet, samplesQ: SampleSet, cfg: TesterConfig, rng) -> TestOutcome:
    """Split each source in two, compute the four-sample statistic, shift and release."""
    X, Xt, n_x = _closeness_split(samplesP, cfg, rng)
    Y, Yt, n_y = _closeness_split(samplesQ, cfg, rng)
    z = closeness_statistic_Z(X, Xt, Y, Yt)
    zp = (z - closeness_shift(min(n_x, n_y), cfg)) / CLOSENESS_SENSITIVITY
    return _release(zp, cfg.epsilon, rng)


# ------------------------------------------------------------ sample complexity


def _unif_formula(k: float, alpha: float, eps: float) -> float:
    base = math.sqrt(k) / alpha**2
    if math.isinf(eps):
        return base
    return base + max(
        math.sqrt(k) / (alpha * math.sqrt(eps)),
        k ** (1 / 3) / (alpha ** (4 / 3) * eps ** (2 / 3)),
        1 / (alpha * eps),
    )


def unif_private_branch(k: float, alpha: float, eps: float) -> str:
    """Which privacy term attains the max in the uniformity formula."""
    terms = {
        "sqrt": math.sqrt(k) / (alpha * math.sqrt(eps)),
        "cube": k ** (1 / 3) / (alpha ** (4 / 3) * eps ** (2 / 3)),
        "linear": 1 / (alpha * eps),
    }
    return max(terms, key=terms.get)


def _close_formula(k: float, alpha: float, eps: float) -> float:
    base = math.sqrt(k) / alpha**2 + k ** (2 / 3) / alpha ** (4 / 3)
    if math.isinf(eps):
        return base
    return base + (
        1 / (alpha * eps)
        + math.sqrt(k) / (alpha * math.sqrt(eps))
        + k ** (1 / 3) / (alpha ** (4 / 3) * eps ** (2 / 3))
    )


def sample_complexity_formula(task: str, k: int, alpha: float, budget: PrivacyBudget) -> float:
    """The rate with no multiplier. (eps, delta) budgets use eps + delta."""
    if k < 1 or not 0 < alpha < 1:
        raise InvalidParameter("need k >= 1 and alpha in (0, 1)")
    eps = budget.effective_epsilon()
    if eps <= 0:
        raise InvalidParameter("epsilon + delta must be positive")
    task = task.upper()
    if task in ("UT", "IT"):
        return _unif_formula(k, alpha, eps)
    if task == "CT":
        return _close_formula(k, alpha, eps)
    raise InvalidParameter(f"unknown task {task!r}")


def sample_complexity(task: str, k: int, alpha: float, budget: PrivacyBudget, constants: Constants = DEFAULT_CONSTANTS) -> int:
    task = task.upper()
    if task == "IT":
        # the identity tester runs the uniformity tester on the reduced instance
        task, k, alpha = "UT", 6 * k, alpha / 3
    mult = constants.mult_ct if task == "CT" else constants.mult_ut
    return int(math.ceil(mult * sample_complexity_formula(task, k, alpha, budget)))
