"""Private k-ary distribution estimation under TV and l2 loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_CONSTANTS, Constants
from .dist import DiscreteDistribution, SampleSet, divergence, project_to_simplex
from .errors import InsufficientSamples, InvalidParameter
from .mechanisms import PrivacyBudget, laplace_noise


@dataclass(frozen=True)
class EstimationReport:
    estimate: DiscreteDistribution
    tv_error: float
    l2_error: float
    n: int
    budget: PrivacyBudget


def empirical_distribution(samples: SampleSet, k: int) -> np.ndarray:
    if samples.n == 0:
        raise InsufficientSamples("no samples")
    return np.bincount(samples.symbols, minlength=k) / samples.n


def estimate_kary_private(samples: SampleSet, k: int, budget: PrivacyBudget, rng) -> DiscreteDistribution:
    """Empirical frequencies plus Laplace(2/(n eps)) per coordinate, projected to the simplex.

    One substitution moves the frequency vector by 2/n in l1, which is the
    sensitivity used for the noise.
    """
    eps = budget.require_pure()
    freq = empirical_distribution(samples, k)
    if math.isinf(eps):
        # frequencies already lie on the simplex; projecting would only add rounding
        return DiscreteDistribution(freq)
    noisy = freq + laplace_noise(2.0 / (samples.n * eps), rng, k)
    return project_to_simplex(noisy)


def estimation_report(samples: SampleSet, truth: DiscreteDistribution, budget: PrivacyBudget, rng) -> EstimationReport:
    est = estimate_kary_private(samples, truth.k, budget, rng)
    return EstimationReport(
        est,
        divergence(est, truth, "TV"),
        divergence(est, truth, "L2"),
        samples.n,
        budget,
    )


def tv_error_rate(k: int, n: int, epsilon: float) -> float:
    """sqrt(k/n) + k/(n eps): the order of the expected TV error."""
    return math.sqrt(k / n) + (0.0 if math.isinf(epsilon) else k / (n * epsilon))


@dataclass(frozen=True)
class SampleComplexity:
    value: int
    upper_bound_only: bool


def estimation_sample_complexity(
    k: int,
    alpha: float,
    budget: PrivacyBudget,
    metric: str = "TV",
    constants: Constants = DEFAULT_CONSTANTS,
) -> SampleComplexity:
    """Sample size for expected ``metric`` error alpha.

    For l2 with alpha above 1/sqrt(k) the known bounds differ by a log factor;
    the upper-bound form is returned and flagged.
    """
    if k < 1 or not 0 < alpha < 1:
        raise InvalidParameter("need k >= 1 and alpha in (0, 1)")
    eps = budget.require_pure()
    inv_eps = 0.0 if math.isinf(eps) else 1.0 / eps
    metric = metric.upper()
    if metric == "TV":
        val, flag = k / alpha**2 + k * inv_eps / alpha, False
    elif metric == "L2":
        if alpha <= 1 / math.sqrt(k):
            val, flag = 1 / alpha**2 + math.sqrt(k) * inv_eps / alpha, False
        else:
            val, flag = 1 / alpha**2 + math.log(k) * inv_eps / alpha**2, True
    else:
        raise InvalidParameter(f"unknown metric {metric!r}")
    return SampleComplexity(int(math.ceil(constants.mult_est * val)), flag)
