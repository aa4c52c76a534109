"""Privacy primitives: budgets, Laplace noise, randomized response, sigmoid release,
an exhaustive sensitivity oracle and a Monte-Carlo ratio audit."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .dist import SampleSet, hamming
from .errors import DimensionMismatch, InvalidBudget, InvalidParameter, TooLarge


@dataclass(frozen=True)
class PrivacyBudget:
    """Either (epsilon, delta) or a zCDP parameter rho.

    ``epsilon = inf`` (or ``rho = inf``) switches noise off, which is how the
    non-private limits are exercised.
    """

    epsilon: float | None = None
    delta: float = 0.0
    rho: float | None = None

    def __post_init__(self):
        if (self.epsilon is None) == (self.rho is None):
            raise InvalidBudget("exactly one of epsilon or rho must be set")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise InvalidBudget("epsilon must be >= 0")
        if self.rho is not None and not self.rho >= 0:
            raise InvalidBudget("rho must be >= 0")
        if not 0 <= self.delta < 1:
            raise InvalidBudget("delta must lie in [0, 1)")
        if self.rho is not None and self.delta:
            raise InvalidBudget("delta is meaningless in rho mode")

    @property
    def mode(self) -> str:
        if self.rho is not None:
            return "zcdp"
        return "approx" if self.delta > 0 else "pure"

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.rho if self.rho is not None else self.epsilon)

    def require_pure(self) -> float:
        if self.epsilon is None or self.delta != 0:
            raise InvalidBudget("a pure epsilon budget is required")
        if self.epsilon <= 0:
            raise InvalidBudget("epsilon must be > 0 when used as a noise divisor")
        return self.epsilon

    def effective_epsilon(self) -> float:
        """epsilon + delta, the substitution used by the sample-complexity formulas."""
        if self.epsilon is None:
            raise InvalidBudget("an epsilon budget is required")
        return self.epsilon + self.delta

    def split(self, parts: int) -> "PrivacyBudget":
        """Budget for each of ``parts`` releases under basic composition."""
        if self.rho is not None:
            return PrivacyBudget(rho=self.rho / parts)
        return PrivacyBudget(epsilon=self.epsilon / parts, delta=self.delta / parts)


@dataclass(frozen=True)
class SensitivityBound:
    delta_f: float
    n: int | None = None

    def __post_init__(self):
        if not self.delta_f >= 0:
            raise InvalidParameter("sensitivity must be >= 0")


def laplace_noise(scale: float, rng: np.random.Generator, size=None):
    """Inverse-CDF Laplace draws, so a seeded stream fixes the output."""
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_mechanism(value, sens: SensitivityBound | float, budget: PrivacyBudget, rng):
    delta_f = sens.delta_f if isinstance(sens, SensitivityBound) else float(sens)
    eps = budget.require_pure()
    if delta_f == 0 or math.isinf(eps):
        return value
    value = np.asarray(value, dtype=float)
    out = value + laplace_noise(delta_f / eps, rng, value.shape or None)
    return float(out) if np.ndim(out) == 0 else out


def laplace_log_density(x, loc: float, scale: float):
    return -np.log(2 * scale) - np.abs(np.asarray(x) - loc) / scale


def keep_probability(epsilon: float) -> float:
    return float(expit(epsilon))


def randomized_response(bit, epsilon: float, rng):
    """Keep each bit with probability e^eps/(1+e^eps), else flip it. Vectorised."""
    bit = np.asarray(bit, dtype=np.int64)
    flip = rng.random(bit.shape) >= keep_probability(epsilon)
    out = np.where(flip, 1 - bit, bit)
    return int(out) if out.ndim == 0 else out


def rr_output_probability(bit: int, out: int, epsilon: float) -> float:
    keep = keep_probability(epsilon)
    return keep if bit == out else 1.0 - keep


def rr_debias(mean_of_outputs, epsilon: float):
    e = math.exp(epsilon)
    return (e + 1) / (e - 1) * (mean_of_outputs - 1 / (e + 1))


def sigmoid_probability(z, epsilon: float):
    """P(release = 1) for the sigmoid release of statistic value z."""
    if math.isinf(epsilon):
        return np.where(np.asarray(z) > 0, 1.0, np.where(np.asarray(z) < 0, 0.0, 0.5))
    return expit(epsilon * np.asarray(z, dtype=float))


def sigmoid_release(z, epsilon: float, rng) -> int:
    return int(rng.random() < sigmoid_probability(z, epsilon))


# ------------------------------------------------------------ sensitivity oracle


def _all_datasets(k: int, n: int) -> np.ndarray:
    """Every length-n string over [k]; row index is the base-k number (first position least significant)."""
    idx = np.arange(k**n)
    return np.stack([(idx // k**i) % k for i in range(n)], axis=1)


def sensitivity_exhaustive(
    f: Callable,
    k: int,
    n: int,
    vectorized: bool = False,
    max_datasets: int = 10**6,
) -> SensitivityBound:
    """Exact max |f(x) - f(y)| over all x in [k]^n and single-position substitutions.

    ``f`` receives a :class:`SampleSet` per dataset, or, when ``vectorized``, the
    whole ``(k**n, n)`` integer array at once and must return ``k**n`` values.
    """
    if k < 1 or n < 1:
        raise InvalidParameter("need k >= 1 and n >= 1")
    if k**n > max_datasets:
        raise TooLarge(f"k^n = {k**n} exceeds {max_datasets}")
    data = _all_datasets(k, n)
    if vectorized:
        values = np.asarray(f(data), dtype=float)
    else:
        values = np.array([f(SampleSet(row, k)) for row in data], dtype=float)
    best = 0.0
    for i in range(n):
        # axis 1 varies position i with everything else fixed
        block = values.reshape(k ** (n - 1 - i), k, k**i)
        best = max(best, float((block.max(axis=1) - block.min(axis=1)).max()))
    return SensitivityBound(best, n)


# ------------------------------------------------------------------ ratio audit


@dataclass(frozen=True)
class AuditResult:
    verdict: str  # "pass", "fail" or "inconclusive"
    worst_excess: float  # max over outcomes of (estimate violation) / stderr
    distance: int


def dp_ratio_audit(
    mech: Callable,
    x,
    y,
    budget: PrivacyBudget,
    trials: int,
    rng: np.random.Generator,
    z_fail: float = 5.0,
    z_warn: float = 3.0,
) -> AuditResult:
    """Refutation-only check of the group-privacy bound between datasets x and y.

    ``mech(data, rng)`` must return a hashable outcome from a finite alphabet.
    The verdict is "fail" when some outcome's estimated probability exceeds the
    allowed bound by more than ``z_fail`` standard errors, "inconclusive" when the
    largest excess lies between ``z_warn`` and ``z_fail`` standard errors, and
    "pass" otherwise. A mechanism that meets the bound with equality passes
    with high probability.
    """
    xa, ya = np.atleast_1d(np.asarray(getattr(x, "symbols", x))), np.atleast_1d(np.asarray(getattr(y, "symbols", y)))
    if xa.shape != ya.shape:
        raise DimensionMismatch("datasets differ in length")
    t = hamming(xa, ya)
    eps = budget.epsilon if budget.epsilon is not None else math.inf
    mult = math.exp(t * eps)
    if not math.isfinite(mult):
        # no constraint to refute
        return AuditResult("pass", -math.inf, t)
    slack = budget.delta * t * math.exp(eps * (t - 1)) if t else 0.0
    outs_x = [mech(x, rng) for _ in range(trials)]
    outs_y = [mech(y, rng) for _ in range(trials)]
    cx: dict = {}
    cy: dict = {}
    for o in outs_x:
        cx[o] = cx.get(o, 0) + 1
    for o in outs_y:
        cy[o] = cy.get(o, 0) + 1
    worst = -math.inf
    for o in set(cx) | set(cy):
        px, py = cx.get(o, 0) / trials, cy.get(o, 0) / trials
        for a, b in ((px, py), (py, px)):
            excess = a - (mult * b + slack)
            var = a * (1 - a) / trials + (mult**2 if math.isfinite(mult) else 0) * b * (1 - b) / trials
            se = math.sqrt(var)
            score = excess / se if se > 0 else (math.inf if excess > 0 else -math.inf)
            worst = max(worst, score)
    if worst > z_fail:
        verdict = "fail"
    elif worst > z_warn:
        verdict = "inconclusive"
    else:
        verdict = "pass"
    return AuditResult(verdict, worst, t)


def enumerate_neighbors(x: np.ndarray, k: int):
    """Yield every dataset at Hamming distance exactly one from ``x``."""
    x = np.asarray(x)
    for i, s in itertools.product(range(x.size), range(k)):
        if s != x[i]:
            y = x.copy()
            y[i] = s
            yield y
