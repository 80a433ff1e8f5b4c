import itertools
import math
import random

import pytest

from apdlbench.stats import (
    DegenerateMarginals,
    EffectLabel,
    EmptySample,
    MannWhitneyMode,
    SampleTooLargeForExact,
    backend_name,
    binomial_ci,
    cliffs_delta,
    effect_label,
    mann_whitney_u,
    prob_superiority,
    weighted_kappa,
    within_one_point_rate,
)


# -- independent oracles (kept deliberately naive) ------------------------------

def brute_force_delta(xs, ys):
    total = 0
    for a in xs:
        for b in ys:
            total += (a > b) - (a < b)
    return total / (len(xs) * len(ys))


def brute_force_u(xs, ys):
    u = 0.0
    for a in xs:
        for b in ys:
            if a > b:
                u += 1.0
            elif a == b:
                u += 0.5
    return u


def enumeration_p(xs, ys):
    """Exact two-sided p by enumerating every labeling of the pooled sample."""
    pooled = list(xs) + list(ys)
    n, big_n = len(xs), len(pooled)
    observed = brute_force_u(xs, ys)
    le = ge = total = 0
    for picks in itertools.combinations(range(big_n), n):
        chosen = set(picks)
        u = brute_force_u(
            [pooled[i] for i in picks],
            [pooled[i] for i in range(big_n) if i not in chosen],
        )
        total += 1
        le += u <= observed
        ge += u >= observed
    return min(1.0, 2.0 * min(le, ge) / total)


# -- Cliff's delta ---------------------------------------------------------------

def test_delta_all_ties_is_zero():
    assert cliffs_delta([5, 5, 5], [5, 5, 5]) == 0.0


def test_delta_complete_separation():
    assert cliffs_delta([2, 3], [0, 1]) == 1.0
    assert cliffs_delta([0, 1], [2, 3]) == -1.0


def test_delta_mixed_example_is_zero():
    # brute force over the 9 pairs: (-1,-1,-1, 0,0,0, +1,+1,+1) sums to 0
    assert brute_force_delta([1, 2, 3], [2, 2, 2]) == 0.0
    assert cliffs_delta([1, 2, 3], [2, 2, 2]) == 0.0


def test_delta_empty_sample():
    with pytest.raises(EmptySample):
        cliffs_delta([], [1])
    with pytest.raises(EmptySample):
        cliffs_delta([1], [])


def test_delta_matches_brute_force_exactly():
    rng = random.Random(101)
    for _ in range(200):
        xs = [rng.randint(0, 10) for _ in range(rng.randint(1, 30))]
        ys = [rng.randint(0, 10) for _ in range(rng.randint(1, 30))]
        assert cliffs_delta(xs, ys) == brute_force_delta(xs, ys)


def test_delta_antisymmetry_and_bounds():
    rng = random.Random(102)
    for _ in range(100):
        xs = [rng.randint(0, 6) for _ in range(rng.randint(1, 20))]
        ys = [rng.randint(0, 6) for _ in range(rng.randint(1, 20))]
        d = cliffs_delta(xs, ys)
        assert abs(d) <= 1.0
        assert d == -cliffs_delta(ys, xs)


def test_u_delta_relation():
    rng = random.Random(103)
    for _ in range(100):
        xs = [rng.randint(0, 6) for _ in range(rng.randint(1, 20))]
        ys = [rng.randint(0, 6) for _ in range(rng.randint(1, 20))]
        u, _ = mann_whitney_u(xs, ys)
        assert abs(cliffs_delta(xs, ys) - (2.0 * u / (len(xs) * len(ys)) - 1.0)) < 1e-12


# -- effect labels and superiority -----------------------------------------------

@pytest.mark.parametrize("delta,label", [
    (0.81, EffectLabel.LARGE),
    (0.87, EffectLabel.LARGE),
    (0.57, EffectLabel.LARGE),
    (0.10, EffectLabel.NEGLIGIBLE),
    (-0.40, EffectLabel.MEDIUM),
    (0.147, EffectLabel.SMALL),
    (0.33, EffectLabel.MEDIUM),
    (0.474, EffectLabel.LARGE),
    (0.1469, EffectLabel.NEGLIGIBLE),
])
def test_effect_labels(delta, label):
    assert effect_label(delta) is label


def test_prob_superiority():
    assert prob_superiority(0.81) == pytest.approx(0.905, abs=5e-4)
    assert prob_superiority(0.0) == 0.5
    assert prob_superiority(1.0) == 1.0


# -- Mann-Whitney ------------------------------------------------------------------

def test_mwu_exact_frozen_example():
    # enumeration over C(4,2)=6 labelings: P(U<=0)=1/6, two-sided p=1/3
    u, p = mann_whitney_u([1, 2], [3, 4], MannWhitneyMode.EXACT)
    assert u == 0.0
    assert p == pytest.approx(1 / 3, abs=1e-12)


def test_mwu_full_tie_single_elements():
    u, p = mann_whitney_u([5], [5], MannWhitneyMode.EXACT)
    assert u == 0.5
    assert p == 1.0
    u, p = mann_whitney_u([5], [5], MannWhitneyMode.NORMAL_APPROX)
    assert p == 1.0


def test_mwu_exact_limit():
    with pytest.raises(SampleTooLargeForExact):
        mann_whitney_u(list(range(9)), list(range(9)), MannWhitneyMode.EXACT)


def test_mwu_empty():
    with pytest.raises(EmptySample):
        mann_whitney_u([], [1], MannWhitneyMode.EXACT)


def test_mwu_exact_matches_enumeration_oracle():
    rng = random.Random(104)
    for _ in range(60):
        xs = [rng.randint(0, 5) for _ in range(rng.randint(1, 5))]
        ys = [rng.randint(0, 5) for _ in range(rng.randint(1, 5))]
        u, p = mann_whitney_u(xs, ys, MannWhitneyMode.EXACT)
        assert u == brute_force_u(xs, ys)
        assert p == pytest.approx(enumeration_p(xs, ys), abs=1e-12)


def test_mwu_normal_approx_close_to_exact_on_continuous_samples():
    rng = random.Random(105)
    for _ in range(100):
        shift = rng.uniform(0.0, 1.5)
        xs = [rng.gauss(shift, 1.0) for _ in range(rng.randint(3, 7))]
        ys = [rng.gauss(0.0, 1.0) for _ in range(rng.randint(3, 7))]
        _, p_exact = mann_whitney_u(xs, ys, MannWhitneyMode.EXACT)
        _, p_norm = mann_whitney_u(xs, ys, MannWhitneyMode.NORMAL_APPROX)
        assert abs(p_exact - p_norm) < 0.05


# -- weighted kappa -----------------------------------------------------------------

def test_kappa_perfect_agreement():
    pairs = [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (2, 2)]
    assert weighted_kappa(pairs) == 1.0


def test_kappa_maximal_disagreement_two_cell_fixture():
    # hand oracle: o = {(0,4): .5, (4,0): .5}; v(0,4)=v(4,0)=16;
    # e-weighted sum = 16*(.5*.5)+16*(.5*.5) = 8; o-weighted sum = 16*.5+16*.5 = 16
    # kappa = 1 - 16/8 = -1
    assert weighted_kappa([(0, 4), (4, 0), (0, 4), (4, 0)]) == -1.0


def test_kappa_chance_level_near_zero():
    rng = random.Random(106)
    pairs = [(rng.randint(0, 4), rng.randint(0, 4)) for _ in range(10_000)]
    assert abs(weighted_kappa(pairs)) < 0.05


def test_kappa_degenerate_marginals():
    with pytest.raises(DegenerateMarginals):
        weighted_kappa([(2, 0), (2, 1), (2, 4)])
    with pytest.raises(DegenerateMarginals):
        weighted_kappa([(0, 0)])


def test_kappa_invariant_under_affine_relabeling():
    rng = random.Random(107)
    pairs = [(rng.randint(0, 4), rng.randint(0, 4)) for _ in range(500)]
    scaled = [(2 * a, 2 * b) for a, b in pairs]
    assert weighted_kappa(pairs) == pytest.approx(weighted_kappa(scaled, categories=9), abs=1e-12)


def test_kappa_rejects_out_of_range():
    with pytest.raises(ValueError):
        weighted_kappa([(0, 5), (1, 1)])


# -- within one point ----------------------------------------------------------------

def test_within_one_point_examples():
    assert within_one_point_rate([(3, 3), (0, 0)]) == 1.0
    assert within_one_point_rate([(0, 2)]) == 0.0
    assert within_one_point_rate([(0, 1), (3, 3), (4, 2)]) == pytest.approx(2 / 3)
    with pytest.raises(EmptySample):
        within_one_point_rate([])


# -- binomial CI --------------------------------------------------------------------

@pytest.mark.parametrize("successes,n,lo,hi", [
    (139, 150, 0.885, 0.968),
    (116, 150, 0.706, 0.840),
    (104, 150, 0.620, 0.767),
])
def test_ci_reproduces_published_intervals(successes, n, lo, hi):
    got_lo, got_hi = binomial_ci(successes, n)
    assert got_lo == pytest.approx(lo, abs=1e-3)
    assert got_hi == pytest.approx(hi, abs=1e-3)


def test_ci_width_scales_inverse_sqrt_n():
    widths = {}
    for n in (10, 100, 1_000, 10_000):
        lo, hi = binomial_ci(n // 2, n)
        widths[n] = (hi - lo) * math.sqrt(n)
    values = list(widths.values())
    assert max(values) - min(values) < 1e-9


def test_ci_clamped_and_guarded():
    lo, hi = binomial_ci(0, 5)
    assert lo == 0.0
    lo, hi = binomial_ci(5, 5)
    assert hi == 1.0
    with pytest.raises(EmptySample):
        binomial_ci(0, 0)
    with pytest.raises(ValueError):
        binomial_ci(6, 5)


# -- backend equivalence ---------------------------------------------------------------

def test_kernel_backends_agree():
    from apdlbench.stats import _pykernels

    try:
        from apdlbench.stats import _ckernels
    except ImportError:
        pytest.skip("compiled kernels unavailable")
    rng = random.Random(108)
    for _ in range(200):
        xs = [rng.randint(0, 8) for _ in range(rng.randint(1, 8))]
        ys = [rng.randint(0, 8) for _ in range(rng.randint(1, 8))]
        assert _pykernels.pairwise_counts(xs, ys) == _ckernels.pairwise_counts(xs, ys)
        pooled = sorted(xs + ys)
        groups, prev = [], None
        for v in pooled:
            if prev is not None and v == prev:
                groups[-1] += 1
            else:
                groups.append(1)
                prev = v
        assert _pykernels.two_u_distribution(groups, len(xs)) == (
            _ckernels.two_u_distribution(groups, len(xs))
        )


def test_backend_name_reports_something():
    assert backend_name() in ("compiled", "pure-python", "pure-python (forced)")
