"""Nonparametric comparison statistics for scored benchmark runs.

Implements Cliff's delta with its effect-size labels, the Mann-Whitney U
test (exact enumeration for small samples, tie-corrected normal
approximation otherwise), squared-weight Cohen's kappa for two ordinal
raters, and the Wald binomial confidence interval used for completion
rates. The pairwise and exact-distribution inner loops run on the selected
kernel backend (see ``_backend``).
"""

from __future__ import annotations

import math
from enum import Enum
from statistics import NormalDist
from typing import Sequence

from ._backend import kernels

EXACT_ENUMERATION_LIMIT = 16


class EmptySample(ValueError):
    """A sample with no observations was passed where one is required."""


class SampleTooLargeForExact(ValueError):
    """Exact enumeration requested beyond the n+m limit."""


class DegenerateMarginals(ValueError):
    """Kappa is undefined: a rater used a single category only."""


class EffectLabel(str, Enum):
    NEGLIGIBLE = "negligible"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class MannWhitneyMode(str, Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


def cliffs_delta(x: Sequence[float], y: Sequence[float]) -> float:
    """Cliff's delta: mean sign of (x_i - y_j) over all pairs.

    Equals P(X > Y) - P(X < Y); ranges over [-1, 1]. Computed from exact
    integer pair counts, so it matches a brute-force double loop bit for
    bit.
    """
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise EmptySample("cliffs_delta requires non-empty samples")
    gt, lt, _ = kernels.pairwise_counts(x, y)
    return (gt - lt) / (n * m)


def effect_label(delta: float) -> EffectLabel:
    """Conventional magnitude label for a Cliff's delta value."""
    size = abs(delta)
    if size < 0.147:
        return EffectLabel.NEGLIGIBLE
    if size < 0.33:
        return EffectLabel.SMALL
    if size < 0.474:
        return EffectLabel.MEDIUM
    return EffectLabel.LARGE


def prob_superiority(delta: float) -> float:
    """P(random X outscores random Y, ties split): (delta + 1) / 2."""
    return (delta + 1.0) / 2.0


def _pooled_group_counts(x: Sequence[float], y: Sequence[float]) -> list[int]:
    pooled = sorted([float(v) for v in x] + [float(v) for v in y])
    groups: list[int] = []
    previous: float | None = None
    for v in pooled:
        if previous is not None and v == previous:
            groups[-1] += 1
        else:
            groups.append(1)
            previous = v
    return groups


def _tie_term(x: Sequence[float], y: Sequence[float]) -> float:
    return sum(c**3 - c for c in _pooled_group_counts(x, y))


def mann_whitney_u(
    x: Sequence[float],
    y: Sequence[float],
    mode: MannWhitneyMode | str = MannWhitneyMode.NORMAL_APPROX,
) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test; returns (U, p).

    U counts x-wins plus half-ties. Exact mode enumerates the permutation
    null over all C(n+m, n) labelings (conditional on the observed ties) and
    requires n+m <= 16; p is 2 * min(P(U <= u), P(U >= u)), capped at 1.
    The normal approximation uses the tie-corrected variance with a 0.5
    continuity correction, and reports p = 1 for a degenerate (all-tied)
    pooled sample.
    """
    mode = MannWhitneyMode(mode)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise EmptySample("mann_whitney_u requires non-empty samples")
    gt, _, tie = kernels.pairwise_counts(x, y)
    two_u = 2 * gt + tie
    u = two_u / 2.0

    if mode is MannWhitneyMode.EXACT:
        if n + m > EXACT_ENUMERATION_LIMIT:
            raise SampleTooLargeForExact(
                f"exact mode requires n+m <= {EXACT_ENUMERATION_LIMIT}, got {n + m}"
            )
        dist = kernels.two_u_distribution(_pooled_group_counts(x, y), n)
        total = sum(dist.values())
        count_le = sum(c for k, c in dist.items() if k <= two_u)
        count_ge = sum(c for k, c in dist.items() if k >= two_u)
        p = min(1.0, 2.0 * min(count_le, count_ge) / total)
        return u, p

    big_n = n + m
    mean = n * m / 2.0
    variance = (n * m / 12.0) * ((big_n + 1) - _tie_term(x, y) / (big_n * (big_n - 1)))
    if variance <= 0.0:
        return u, 1.0
    z = max(0.0, abs(u - mean) - 0.5) / math.sqrt(variance)
    return u, min(1.0, math.erfc(z / math.sqrt(2.0)))


def weighted_kappa(pairs: Sequence[tuple[int, int]], categories: int = 5) -> float:
    """Cohen's kappa with squared-error disagreement weights.

    ``pairs`` are (rater_a, rater_b) ordinal scores in [0, categories).
    kappa = 1 - sum(v*o) / sum(v*e) with v_ij = (i-j)^2 (the (k-1)^2
    normalizer cancels), o the observed cell proportions, e the chance
    proportions from the marginals. Raises DegenerateMarginals when a rater
    used a single category: chance-corrected agreement is undefined there.
    """
    if len(pairs) < 2:
        raise DegenerateMarginals("weighted_kappa requires at least 2 pairs")
    counts = [[0] * categories for _ in range(categories)]
    for a, b in pairs:
        if not (0 <= a < categories and 0 <= b < categories):
            raise ValueError(f"score pair ({a}, {b}) outside [0, {categories})")
        counts[a][b] += 1
    total = len(pairs)
    marg_a = [sum(row) for row in counts]
    marg_b = [sum(counts[i][j] for i in range(categories)) for j in range(categories)]
    if sum(1 for v in marg_a if v) < 2 or sum(1 for v in marg_b if v) < 2:
        raise DegenerateMarginals("a rater used a single category only")

    observed = 0.0
    expected = 0.0
    for i in range(categories):
        for j in range(categories):
            weight = (i - j) ** 2
            observed += weight * counts[i][j] / total
            expected += weight * (marg_a[i] / total) * (marg_b[j] / total)
    return 1.0 - observed / expected


def within_one_point_rate(pairs: Sequence[tuple[int, int]]) -> float:
    """Fraction of score pairs that differ by at most one point."""
    if not pairs:
        raise EmptySample("within_one_point_rate requires at least one pair")
    return sum(1 for a, b in pairs if abs(a - b) <= 1) / len(pairs)


def binomial_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wald (normal-approximation) binomial confidence interval, clamped to
    [0, 1]."""
    if n <= 0:
        raise EmptySample("binomial_ci requires n >= 1")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must be in [0, {n}], got {successes}")
    p_hat = successes / n
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    half = z * math.sqrt(p_hat * (1.0 - p_hat) / n)
    return max(0.0, p_hat - half), min(1.0, p_hat + half)
