"""Statistics for strategy comparison: effect sizes, rank tests, rater
agreement, and binomial intervals."""

from ._backend import backend_name
from .core import (
    EXACT_ENUMERATION_LIMIT,
    DegenerateMarginals,
    EffectLabel,
    EmptySample,
    MannWhitneyMode,
    SampleTooLargeForExact,
    binomial_ci,
    cliffs_delta,
    effect_label,
    mann_whitney_u,
    prob_superiority,
    weighted_kappa,
    within_one_point_rate,
)

__all__ = [
    "EXACT_ENUMERATION_LIMIT",
    "DegenerateMarginals",
    "EffectLabel",
    "EmptySample",
    "MannWhitneyMode",
    "SampleTooLargeForExact",
    "backend_name",
    "binomial_ci",
    "cliffs_delta",
    "effect_label",
    "mann_whitney_u",
    "prob_superiority",
    "weighted_kappa",
    "within_one_point_rate",
]
