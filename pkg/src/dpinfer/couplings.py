"""Executable couplings between dataset laws, a Monte-Carlo Hamming verifier,
greedy constant-weight codes and the coupling-based lower-bound calculators."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .constants import DEFAULT_CONSTANTS, Constants
from .dist import DiscreteDistribution, divergence, sample_symbols
from .errors import InvalidParameter, TooLarge


@dataclass(frozen=True)
class Coupling:
    """Joint sampler of dataset pairs with declared marginals and a Hamming bound.

    ``draw(trials, rng)`` returns two integer arrays of shape ``(trials, n)``.
    """

    draw: Callable
    n: int
    law_x: str
    law_y: str
    d_bound: float

    def sample(self, rng):
        x, y = self.draw(1, rng)
        return x[0], y[0]


@dataclass(frozen=True)
class HammingEstimate:
    mean: float
    stderr: float
    bound: float

    @property
    def violated(self) -> bool:
        return self.mean - 5 * self.stderr > self.bound


def expected_hamming_mc(c: Coupling, trials: int, rng, batch: int = 20000) -> HammingEstimate:
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        x, y = c.draw(m, rng)
        h = (x != y).sum(axis=1).astype(float)
        total += h.sum()
        total_sq += (h * h).sum()
        done += m
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    se = math.sqrt(var / trials) if trials > 1 else 0.0
    return HammingEstimate(mean, se, c.d_bound)


# ----------------------------------------------------------- elementary couplings


def coin_coupling(b1: float, b2: float, n: int) -> Coupling:
    """Monotone coupling of Bern(b1)^n and Bern(b2)^n: Y_i = 1 whenever X_i = 1."""
    if not 0 <= b1 <= b2 <= 1:
        raise InvalidParameter("need 0 <= b1 <= b2 <= 1")
    up = 0.0 if b1 == 1 else (b2 - b1) / (1 - b1)

    def draw(trials, rng):
        x = (rng.random((trials, n)) < b1).astype(np.int64)
        extra = rng.random((trials, n)) < up
        y = np.where(x == 1, 1, extra.astype(np.int64))
        return x, y

    return Coupling(draw, n, f"Bern({b1})^{n}", f"Bern({b2})^{n}", n * (b2 - b1))


def maximal_coupling(p: DiscreteDistribution, q: DiscreteDistribution, n: int) -> Coupling:
    """Coordinatewise coupling with P(X_i = Y_i) = 1 - TV(p, q)."""
    tv = divergence(p, q, "TV")
    common = np.minimum(p.probs, q.probs)
    res_p = p.probs - common
    res_q = q.probs - common

    def draw(trials, rng):
        shape = (trials, n)
        if tv == 0:
            x = sample_symbols(p.probs, shape, rng)
            return x, x.copy()
        if tv >= 1:
            return sample_symbols(res_p, shape, rng), sample_symbols(res_q, shape, rng)
        agree = rng.random(shape) < 1 - tv
        both = sample_symbols(common, shape, rng)
        x = np.where(agree, both, sample_symbols(res_p, shape, rng))
        y = np.where(agree, both, sample_symbols(res_q, shape, rng))
        return x, y

    return Coupling(draw, n, f"p^{n}", f"q^{n}", n * tv)


# ------------------------------------------------------------ binomial mixtures


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@lru_cache(maxsize=512)
def _weight_laws(t: int, alpha: Fraction) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Laws of the number of ones under P1 = Bern(1/2)^t and the +-alpha mixture P2."""
    half = Fraction(1, 2)
    lo, hi = half - alpha, half + alpha
    p1, p2 = [], []
    for w in range(t + 1):
        c = math.comb(t, w)
        p1.append(c * half**t)
        p2.append(c * half * (lo**w * hi ** (t - w) + hi**w * lo ** (t - w)))
    return tuple(p1), tuple(p2)


def binomial_tv(t: int, alpha, exact: bool = False):
    """Exact TV between Bern(1/2)^t and (Bern(1/2-alpha)^t + Bern(1/2+alpha)^t)/2.

    Both laws are exchangeable, so summing over the t+1 weight classes is exact.
    """
    if t > 30:
        raise TooLarge("t > 30")
    if t < 0:
        raise InvalidParameter("t must be >= 0")
    a = _as_fraction(alpha)
    p1, p2 = _weight_laws(t, a)
    tv = sum(abs(x - y) for x, y in zip(p1, p2)) / 2
    return tv if exact else float(tv)


@lru_cache(maxsize=512)
def max_count_cdfs(t: int, alpha: Fraction) -> tuple[np.ndarray, tuple[Fraction, ...], tuple[Fraction, ...]]:
    """Exact CDFs of max{N, t-N} under the fair and mixed binomial laws.

    Returns the support ``z = ceil(t/2)..t`` and the two CDFs on it.
    """
    p1, p2 = _weight_laws(t, alpha)
    zs = np.arange((t + 1) // 2, t + 1)
    f1, f2 = [], []
    c1 = c2 = Fraction(0)
    for z in zs:
        z = int(z)
        m1 = p1[z] + (p1[t - z] if t - z != z else 0)
        m2 = p2[z] + (p2[t - z] if t - z != z else 0)
        c1 += m1
        c2 += m2
        f1.append(c1)
        f2.append(c2)
    return zs, tuple(f1), tuple(f2)


def stochastic_dominance_exact(t: int, alpha) -> bool:
    """True when the mixed max-count dominates the fair one: F2(z) <= F1(z) for all z."""
    _, f1, f2 = max_count_cdfs(t, _as_fraction(alpha))
    return all(b <= a for a, b in zip(f1, f2))


def hamming_bound_monotone(t: float, alpha: float) -> float:
    return 64 * (alpha**2 * t**1.5 + alpha**4 * t**2.5 + alpha**5 * t**3)


def monotone_binomial_coupling(t: int, alpha: float, rng, size: int | None = None):
    """Quantile coupling of Z1 = max{N1, t-N1} and Z2 = max{N2, t-N2}.

    One uniform drives both inverse CDFs, so Z2 >= Z1 in every draw whenever the
    CDFs are ordered (checked exactly by :func:`stochastic_dominance_exact`).
    """
    zs, f1, f2 = max_count_cdfs(int(t), _as_fraction(alpha))
    u = rng.random(size)
    return _quantile(zs, f1, u), _quantile(zs, f2, u)


def _quantile(zs, cdf, u):
    # float() of an exact cdf is monotone, so the ordering survives rounding
    c = np.array([float(x) for x in cdf])
    c[-1] = 1.0
    return zs[np.minimum(np.searchsorted(c, u, side="right"), zs.size - 1)]


# ------------------------------------------------------------- Paninski coupling


def _weight_coupling_tables(r: int, alpha: Fraction):
    """Pieces of the maximal coupling of the two weight laws for r positions."""
    p1, p2 = (np.array([float(x) for x in v]) for v in _weight_laws(r, alpha))
    common = np.minimum(p1, p2)
    tv = 1.0 - common.sum()
    return tv, common, p1 - common, p2 - common


def _ranks_within_groups(group: np.ndarray, rng) -> np.ndarray:
    """Uniformly random rank of each element inside its group id."""
    key = rng.random(group.size)
    order = np.lexsort((key, group))
    g_sorted = group[order]
    starts = np.flatnonzero(np.r_[True, g_sorted[1:] != g_sorted[:-1]])
    first = np.repeat(starts, np.diff(np.r_[starts, g_sorted.size]))
    ranks = np.empty(group.size, dtype=np.int64)
    ranks[order] = np.arange(group.size) - first
    return ranks


def paninski_coupling(
    k: int,
    alpha: float,
    n: int,
    path: str = "auto",
    constants: Constants = DEFAULT_CONSTANTS,
) -> Coupling:
    """Couple U[k]^n with the uniform mixture over z of paninski(k, alpha, z)^n.

    Coordinates are grouped by symbol pair; both datasets share the pair of every
    position. Inside a pair holding R positions the within-pair bits are coupled
    either by the maximal coupling of the weight laws (``path="max"``, used for
    n <= k) or by the quantile coupling of the max-counts followed by flipping
    uniformly chosen minority positions (``path="monotone"``).
    """
    if k < 2 or k % 2:
        raise InvalidParameter("k must be even")
    if n < 1 or not 0 <= alpha < 0.5:
        raise InvalidParameter("need n >= 1 and alpha in [0, 1/2)")
    if path == "auto":
        path = "max" if n <= k else "monotone"
    if path not in ("max", "monotone"):
        raise InvalidParameter(f"unknown path {path!r}")
    a = Fraction(alpha)
    half_k = k // 2

    def draw(trials, rng):
        pair = rng.integers(0, half_k, size=(trials, n))
        gid = (np.arange(trials)[:, None] * half_k + pair).ravel()
        counts = np.bincount(gid, minlength=trials * half_k)
        R = counts[gid]
        rank = _ranks_within_groups(gid, rng)
        # per-group random quantities, indexed by group id
        ngroups = trials * half_k
        u1, u2, u3 = rng.random(ngroups), rng.random(ngroups), rng.random(ngroups)
        gw1 = np.zeros(ngroups, dtype=np.int64)
        gw2 = np.zeros(ngroups, dtype=np.int64)
        indep = np.zeros(ngroups, dtype=bool)
        for r in np.unique(counts[counts > 0]):
            sel = np.flatnonzero(counts == r)
            if path == "max":
                tv, common, res1, res2 = _weight_coupling_tables(int(r), a)
                agree = u1[sel] < 1 - tv
                w_c = _inv_cdf(common, u2[sel])
                w_1 = _inv_cdf(res1, u2[sel]) if tv > 0 else w_c
                w_2 = _inv_cdf(res2, u3[sel]) if tv > 0 else w_c
                gw1[sel] = np.where(agree, w_c, w_1)
                gw2[sel] = np.where(agree, w_c, w_2)
                indep[sel] = ~agree
            else:
                zs, f1, f2 = max_count_cdfs(int(r), a)
                gw1[sel] = _quantile(zs, f1, u1[sel])
                gw2[sel] = _quantile(zs, f2, u1[sel])
        if path == "max":
            rank2 = _ranks_within_groups(gid, rng)
            xbit = rank < gw1[gid]
            ybit = np.where(indep[gid], rank2 < gw2[gid], xbit)
        else:
            side = (u2 < 0.5)[gid]
            xmaj = rank < gw1[gid]
            ymaj = rank < gw2[gid]
            xbit = np.where(side, xmaj, ~xmaj)
            ybit = np.where(side, ymaj, ~ymaj)
        base = 2 * pair.ravel()
        x = (base + (~xbit)).reshape(trials, n)
        y = (base + (~ybit)).reshape(trials, n)
        return x.astype(np.int64), y.astype(np.int64)

    if path == "max":
        bound = 8 * alpha**2 * n**2 / k
    else:
        bound = 96 * constants.C_binom * k * (n / k) ** 1.5
    return Coupling(draw, n, f"U[{k}]^{n}", f"mixture of paninski({k},{alpha})^{n}", bound)


def _inv_cdf(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = np.cumsum(weights)
    return np.minimum(np.searchsorted(c, u * c[-1], side="right"), weights.size - 1)


def paninski_monotone_assembled_bound(k: int, alpha: float, n: int) -> float:
    """Sum over pairs of E_R[64(a^2 R^1.5 + a^4 R^2.5 + a^5 R^3)], R ~ Bin(n, 2/k)."""
    from scipy.stats import binom

    r = np.arange(n + 1)
    w = binom.pmf(r, n, 2.0 / k)
    return float(k / 2 * (w * hamming_bound_monotone(r.astype(float), alpha)).sum())


# ---------------------------------------------------------------- GV codes


@dataclass(frozen=True)
class Codebook:
    codewords: tuple[int, ...]  # bitmasks, bit j set means coordinate j is one
    length: int
    weight: int
    min_distance: int

    def __post_init__(self):
        for c in self.codewords:
            if c.bit_count() != self.weight:
                raise AssertionError("codeword of wrong weight")
        if self.length <= 63:
            words = np.array(self.codewords, dtype=np.uint64)
            for i in range(len(words) - 1):
                if np.bitwise_count(words[i + 1:] ^ words[i]).min() < self.min_distance:
                    raise AssertionError("codewords too close")
            return
        for a, b in itertools.combinations(self.codewords, 2):
            if (a ^ b).bit_count() < self.min_distance:
                raise AssertionError("codewords too close")

    @property
    def size(self) -> int:
        return len(self.codewords)

    def as_array(self) -> np.ndarray:
        return np.array([[(c >> j) & 1 for j in range(self.length)] for c in self.codewords], dtype=np.int8)


def gv_constant_weight_code(k: int, weight: int, min_dist: int, max_candidates: int = 2_000_000) -> Codebook:
    """Greedy lexicographic constant-weight code."""
    if not (1 <= weight <= k and 0 <= min_dist and min_dist <= max(weight, 1)):
        raise InvalidParameter("need 1 <= weight <= k and min_dist <= weight")
    if math.comb(k, weight) > max_candidates:
        raise TooLarge(f"C({k},{weight}) candidates exceed {max_candidates}")
    chosen: list[int] = []
    # packed uint64 buffer of the chosen words for vectorised distance checks
    buf = np.empty(math.comb(k, weight), dtype=np.uint64) if k <= 63 else None
    for combo in itertools.combinations(range(k), weight):
        word = 0
        for j in combo:
            word |= 1 << j
        if buf is not None:
            m = len(chosen)
            ok = m == 0 or np.bitwise_count(buf[:m] ^ np.uint64(word)).min() >= min_dist
            if ok:
                buf[m] = word
        else:
            ok = all((word ^ c).bit_count() >= min_dist for c in chosen)
        if ok:
            chosen.append(word)
    return Codebook(tuple(chosen), k, weight, min_dist)


def gv_greedy_floor(k: int, weight: int, min_dist: int) -> float:
    """C(k, w) / |ball|: a size every maximal code reaches.

    The ball counts weight-w words at distance below ``min_dist``; two weight-w
    words differ in an even number 2i of positions.
    """
    ball = sum(math.comb(weight, i) * math.comb(k - weight, i) for i in range((min_dist - 1) // 2 + 1))
    return math.comb(k, weight) / ball


def gv_size_lower_bound(k: int, weight: int) -> float:
    """Size guarantee (k / (2^{7/8} l))^{7l/8} for weight l and distance l/4."""
    return (k / (2 ** (7 / 8) * weight)) ** (7 * weight / 8)


# ------------------------------------------------------- lower-bound calculators


def lebound_from_coupling(D: float, constants: Constants = DEFAULT_CONSTANTS) -> float:
    """Lower bound c/D on eps + delta for testers with both errors at most 0.1."""
    if not D > 0:
        raise InvalidParameter("D must be positive")
    return constants.c_lb / D


def entropy_lb_samples(k: int, alpha: float, epsilon: float, constants: Constants = DEFAULT_CONSTANTS) -> float:
    return constants.c_lb * math.log(k) / (alpha * epsilon)


def coverage_lb_samples(alpha: float, epsilon: float, constants: Constants = DEFAULT_CONSTANTS) -> float:
    return constants.c_lb / (alpha * epsilon)


def support_size_lb_samples(k: int, alpha: float, epsilon: float, constants: Constants = DEFAULT_CONSTANTS) -> float:
    if k >= 1 / alpha:
        return constants.c_lb / (alpha * epsilon)
    return constants.c_lb * k / epsilon
