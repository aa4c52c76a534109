"""Differentially private hypothesis testing, property estimation and selection."""

from .constants import DEFAULT_CONSTANTS, Constants
from .dist import DiscreteDistribution, Histogram, Profile, SampleSet, divergence, sample
from .errors import DPInferError
from .mechanisms import PrivacyBudget

__all__ = [
    "Constants",
    "DEFAULT_CONSTANTS",
    "DiscreteDistribution",
    "DPInferError",
    "Histogram",
    "PrivacyBudget",
    "Profile",
    "SampleSet",
    "divergence",
    "sample",
]
__version__ = "0.1.0"
