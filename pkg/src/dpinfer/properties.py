"""Private estimators for entropy, support coverage and support size."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as P
from scipy.stats import poisson

from .dist import Histogram, Profile, SampleSet
from .errors import EmptyHistogram, InsufficientSamples, InvalidParameter
from .mechanisms import PrivacyBudget, SensitivityBound, laplace_noise


@dataclass(frozen=True)
class PropertyEstimate:
    value: float
    noise_scale: float
    regime: str
    sensitivity: float = float("nan")


def _release(core: float, sens: float, budget: PrivacyBudget, rng, regime: str) -> PropertyEstimate:
    eps = budget.require_pure()
    scale = 0.0 if math.isinf(eps) else sens / eps
    value = core + (float(laplace_noise(scale, rng)) if scale > 0 else 0.0)
    return PropertyEstimate(value, scale, regime, sens)


def _hist(samples, k: int | None = None) -> Histogram:
    if isinstance(samples, Histogram):
        return samples
    kk = samples.k if k is None else k
    return Histogram(np.bincount(samples.symbols, minlength=kk))


# --------------------------------------------------------------------- entropy


def entropy_empirical(hist: Histogram) -> float:
    n = hist.n
    if n == 0:
        raise EmptyHistogram("empirical entropy of an empty histogram")
    c = hist.counts[hist.counts > 0]
    # n ln n - sum N ln N, divided by n: fewer cancellations than summing -p ln p
    return float(math.log(n) - (c * np.log(c)).sum() / n)


def entropy_sensitivity(n: int) -> SensitivityBound:
    if n < 1:
        raise InvalidParameter("n must be >= 1")
    return SensitivityBound(2 * max(1.0, math.log(n)) / n, n)


def entropy_private_empirical(samples: SampleSet, budget: PrivacyBudget, rng, boost: bool = False) -> PropertyEstimate:
    """Plug-in entropy plus Laplace noise; ``boost`` takes the median of three disjoint runs."""
    if boost:
        parts = samples.split(3)
        runs = [entropy_private_empirical(s, budget, rng) for s in parts]
        vals = sorted(r.value for r in runs)
        return PropertyEstimate(vals[1], runs[0].noise_scale, "empirical-median3", runs[0].sensitivity)
    sens = entropy_sensitivity(samples.n).delta_f
    return _release(entropy_empirical(samples.histogram()), sens, budget, rng, "empirical")


@lru_cache(maxsize=64)
def _neg_xlogx_cheb(degree: int) -> np.ndarray:
    """Power-basis coefficients of a near-minimax fit to -u ln u on [0, 1]."""
    f = lambda u: -u * np.log(np.where(u > 0, u, 1.0))  # noqa: E731
    cheb = C.Chebyshev.interpolate(f, degree, domain=[0, 1])
    return cheb.convert(kind=P.Polynomial, domain=[-1, 1], window=[-1, 1]).coef


@dataclass(frozen=True)
class PolyEntropyEstimator:
    """Per-symbol function g(N) of the polynomial entropy estimator.

    Counts up to ``threshold`` use an unbiased estimate of a degree-``degree``
    polynomial approximating -p ln p on ``[0, interval/n]``; larger counts use
    the plug-in term plus the Miller-Madow correction 1/(2n).
    """

    n: int
    k: int
    degree: int
    threshold: int
    interval: float

    @classmethod
    def default(cls, n: int, k: int, degree_factor: float = 1.2, c_interval: float = 4.0, c_threshold: float = 2.0):
        L = max(1, int(math.ceil(degree_factor * math.log(max(k, 2)))))
        tau = max(1, int(math.ceil(c_threshold * math.log(max(k, 2)))))
        return cls(n, k, L, tau, c_interval * tau)

    def coefficients(self) -> np.ndarray:
        """b_m with sum b_m x^m ~ -x ln x on [0, a]."""
        a = min(1.0, self.interval / self.n)
        c = _neg_xlogx_cheb(self.degree)
        b = c * a ** (1.0 - np.arange(self.degree + 1))
        b[1] -= math.log(a)
        return b

    def table(self) -> np.ndarray:
        """g(j) for j = 0..n."""
        n = self.n
        j = np.arange(n + 1, dtype=float)
        b = self.coefficients()
        # unbiased estimate of p^m: falling factorial ratio (j)_m / (n)_m
        poly = np.full(n + 1, b[0])
        ratio = np.ones(n + 1)
        for m in range(1, b.size):
            ratio = ratio * np.maximum(j - (m - 1), 0) / max(n - (m - 1), 1)
            poly += b[m] * ratio
        with np.errstate(divide="ignore", invalid="ignore"):
            plug = np.where(j > 0, -(j / n) * np.log(j / n) + 1.0 / (2 * n), 0.0)
        return np.where(j <= self.threshold, poly, plug)

    def estimate(self, hist: Histogram) -> float:
        g = self.table()
        return float(g[hist.counts].sum())

    def sensitivity(self) -> float:
        d = np.diff(self.table())
        return float(d.max() - d.min())


def entropy_poly(hist: Histogram, k: int | None = None, **kw) -> float:
    k = hist.k if k is None else k
    est = PolyEntropyEstimator.default(hist.n, k, **kw)
    return min(max(est.estimate(hist), 0.0), math.log(k))


def entropy_private_poly(
    samples: SampleSet,
    k: int,
    alpha: float,
    budget: PrivacyBudget,
    lam: float = 0.5,
    rng=None,
    degree_factor: float = 1.2,
) -> PropertyEstimate:
    """Polynomial-approximation entropy estimate with Laplace noise, clipped to [0, ln k].

    The noise scale is max(n^lam / n, exact sensitivity of the estimator) / eps,
    so the release stays private even where n^lam / n would be too small.
    ``alpha`` is the target accuracy and only labels the run.
    """
    if not 0.01 <= lam <= 1:
        raise InvalidParameter("lambda must lie in [0.01, 1]")
    n = samples.n
    if n == 0:
        raise EmptyHistogram("no samples")
    est = PolyEntropyEstimator.default(n, k, degree_factor=degree_factor)
    hist = _hist(samples, k)
    sens = max(n**lam / n, est.sensitivity())
    out = _release(est.estimate(hist), sens, budget, rng, "poly")
    clipped = min(max(out.value, 0.0), math.log(k))
    return PropertyEstimate(clipped, out.noise_scale, out.regime, sens)


# -------------------------------------------------------------------- coverage


def sgt_coefficients(n: int, t: float, r: float, imax: int | None = None) -> np.ndarray:
    """Coefficient of Phi_i, i = 0..imax, in the smoothed Good-Toulmin estimator.

    Entry 0 is zero since unseen symbols contribute nothing. ``r = inf`` gives
    the unsmoothed Good-Toulmin coefficients 1 - (-t)^i.
    """
    imax = n if imax is None else imax
    i = np.arange(1, imax + 1)
    if math.isinf(r):
        logtail = np.zeros(i.size)
    else:
        logtail = poisson.logsf(i - 1, r)
    if t == 0:
        mag = np.zeros(i.size)
    else:
        with np.errstate(over="ignore"):
            mag = np.exp(i * math.log(abs(t)) + logtail)
    sign = np.where((i % 2 == 1) & (t > 0), -1.0, 1.0)
    out = np.zeros(imax + 1)
    out[1:] = 1.0 - sign * mag
    return out


def sgt_r_theory(alpha: float) -> float:
    return math.log(3.0 / alpha)


def sgt_r_experiment(n: int, t: float) -> float:
    """Data-size dependent smoothing; unsmoothed (r = inf) when t <= 1."""
    if t <= 1:
        return math.inf
    return math.log(n * (t + 1) ** 2 / (t - 1)) / (2 * t)


def coverage_sgt(profile: Profile, n: int, m: int, r: float) -> float:
    """Estimate the expected number of distinct symbols in m draws from n samples."""
    if m < n:
        raise InvalidParameter("extrapolation needs m >= n; use coverage_batch")
    t = (m - n) / n
    phi = np.asarray(profile.phi)
    coef = sgt_coefficients(n, t, r, phi.size - 1)
    return math.fsum(coef[1:] * phi[1:])


def sgt_sensitivity(n: int, t: float, r: float) -> float:
    """Exact worst-case change of the SGT estimate under one substitution.

    Moving one sample from a symbol seen a times to one seen b times changes
    the sum by d(b) - d(a-1), where d(j) = coef(j+1) - coef(j).
    """
    d = np.diff(sgt_coefficients(n, t, r, n))
    return float(d.max() - d.min())


def sgt_sensitivity_bound(m: int, t: float, r: float) -> float:
    """The closed-form bound (2/m)(1 + e^{r(t-1)}) on the normalized estimate."""
    return 2.0 / m * (1.0 + math.exp(r * (t - 1)))


def coverage_batch(samples: SampleSet, k: int, m: int) -> float:
    """Mean number of distinct symbols over the floor(n/m) disjoint batches of size m.

    The trailing n mod m samples are dropped.
    """
    n = samples.n
    if m < 1 or n < m:
        raise InsufficientSamples("need at least m samples")
    B = n // m
    batches = np.sort(samples.symbols[: B * m].reshape(B, m), axis=1)
    distinct = 1 + (np.diff(batches, axis=1) != 0).sum(axis=1)
    return float(distinct.sum() / B)


def batch_sensitivity(n: int, m: int) -> float:
    return 1.0 / (n // m)


def coverage_expected(probs: np.ndarray, m: int) -> float:
    """S_m(p) = sum_x 1 - (1 - p_x)^m."""
    return float((-np.expm1(m * np.log1p(-np.minimum(probs, 1 - 1e-300)))).sum())


def coverage_private(
    samples: SampleSet,
    k: int,
    m: int,
    alpha: float,
    budget: PrivacyBudget,
    rng,
    r_mode: str = "theory",
) -> PropertyEstimate:
    """Private support-coverage estimate of S_m (value is on the count scale).

    Uses the batch estimator when m <= 1/(alpha*eps) or m <= n, and the smoothed
    Good-Toulmin estimator otherwise.
    """
    eps = budget.require_pure()
    n = samples.n
    if m <= 1 / (alpha * eps) or m <= n:
        core = coverage_batch(samples, k, m)
        return _release(core, batch_sensitivity(n, m), budget, rng, "batch")
    t = (m - n) / n
    if r_mode == "theory":
        r = sgt_r_theory(alpha)
    elif r_mode == "experiment":
        r = sgt_r_experiment(n, t)
    else:
        raise InvalidParameter(f"unknown r_mode {r_mode!r}")
    prof = _hist(samples, k).profile()
    core = coverage_sgt(prof, n, m, r)
    return _release(core, sgt_sensitivity(n, t, r), budget, rng, f"sgt-{r_mode}")


# ---------------------------------------------------------------- support size


def support_dense_core(hist: Histogram, k: int) -> float:
    n = hist.n
    if n == 0:
        raise EmptyHistogram("no samples")
    return float(np.minimum(1.0, hist.counts * (3.0 * k / n)).sum())


def support_dense_sensitivity(n: int, k: int) -> float:
    return 3.0 * k / n


def support_size_private(samples: SampleSet, k: int, alpha: float, budget: PrivacyBudget, rng) -> PropertyEstimate:
    """Support size for distributions whose nonzero masses are at least 1/k."""
    eps = budget.require_pure()
    n = samples.n
    if n == 0:
        raise EmptyHistogram("no samples")
    if k >= 1 / (alpha * eps):
        m = int(math.ceil(k * math.log(3 / alpha)))
        est = coverage_private(samples, k, m, alpha, budget, rng)
        return PropertyEstimate(est.value, est.noise_scale, "sparse-" + est.regime, est.sensitivity)
    hist = _hist(samples, k)
    return _release(support_dense_core(hist, k), support_dense_sensitivity(n, k), budget, rng, "dense")
