"""Pure-Python statistics kernels.

Twin of the compiled extension ``_ckernels``; selected at import time when
the extension is unavailable (or when APDLBENCH_PURE_KERNELS is set). Both
backends implement the identical integer-exact contracts, so results never
depend on which one is active.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from math import comb


def pairwise_counts(x, y) -> tuple[int, int, int]:
    """Counts of (x>y, x<y, x==y) pairs across two samples.

    O((n+m) log m): y is sorted once and each x element located by bisection.
    Values must be finite and comparable as floats.
    """
    ys = sorted(float(v) for v in y)
    m = len(ys)
    gt = lt = tie = 0
    for v in x:
        v = float(v)
        lo = bisect_left(ys, v)
        hi = bisect_right(ys, v)
        gt += lo
        lt += m - hi
        tie += hi - lo
    return gt, lt, tie


def two_u_distribution(group_counts, n: int) -> dict[int, int]:
    """Exact null distribution of 2*U over all C(N, n) labelings.

    ``group_counts`` are the multiplicities of the pooled sample's distinct
    values in ascending value order; ``n`` is the size of the first sample.
    U counts first-sample wins plus half-ties, so 2*U is integral. Returns
    {2u: number_of_labelings}; the counts sum to C(N, n).

    The recursion walks the value groups: within a group of c equal values,
    choosing a of them for the first sample contributes
    2*a*y_below + a*(c - a) to 2*U, where y_below is the number of
    second-sample elements in strictly smaller groups. y_below depends only
    on how many elements so far went to the first sample, so the state is
    (first-sample count, 2u) with multiplicity weights C(c, a).
    """
    states: dict[int, dict[int, int]] = {0: {0: 1}}
    prefix = 0
    for c in group_counts:
        next_states: dict[int, dict[int, int]] = {}
        for x_used, dist in states.items():
            y_below = prefix - x_used
            for a in range(0, min(c, n - x_used) + 1):
                weight = comb(c, a)
                contrib = 2 * a * y_below + a * (c - a)
                bucket = next_states.setdefault(x_used + a, {})
                for two_u, count in dist.items():
                    key = two_u + contrib
                    bucket[key] = bucket.get(key, 0) + count * weight
        states = next_states
        prefix += c
    return states.get(n, {})
