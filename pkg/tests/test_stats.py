import math

import numpy as np
import pytest

from gplab.errors import BisectionNonBracketed, InsufficientHits, NotPSD
from gplab.kernel import KernelSpec
from gplab.perc import AdmissibleEvent, CrossingEvent
from gplab.stats import (DecayFit, EstimateReport, ModelSpec, bisect_lc, bisect_sorted, cameron_martin_check,
                         compare, compare_scales, dumps, estimate, event_thresholds, fit_decay,
                         fit_probabilities, gaussian_factor, indicators, level_interval, local_gap_tail,
                         wilson_interval)

from oracles import normal_cdf

BF2 = KernelSpec.bargmann_fock(2)
EV = AdmissibleEvent(0.5, 1.5)


def model(N=4.0, eps=0.5, delta=0.0):
    return ModelSpec(BF2, eps, N, delta)


def wilson_closed_form(k, n, z=1.959963984540054):
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre - half, centre + half


# -- Wilson intervals and reports ----------------------------------------------------

@pytest.mark.parametrize("k,n", [(0, 100), (3, 100), (50, 100), (100, 100), (7, 13)])
def test_wilson_matches_closed_form(k, n):
    lo, hi = wilson_interval(k, n)
    rlo, rhi = wilson_closed_form(k, n)
    assert lo == pytest.approx(max(rlo, 0.0), abs=1e-12)
    assert hi == pytest.approx(min(rhi, 1.0), abs=1e-12)


def test_report_fields():
    r = EstimateReport.from_counts(30, 120, 5, {"x": 1})
    assert r.estimate == 0.25 and r.n == 120 and r.hits == 30
    assert r.ci_lo < 0.25 < r.ci_hi
    assert r.sigma == pytest.approx(math.sqrt(0.25 * 0.75 / 120))
    assert dumps(r.to_dict()) == r.to_json()


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": np.float64(0.5), "c": np.arange(2)}) == '{"a":0.5,"b":1,"c":[0,1]}'


# -- estimates -----------------------------------------------------------------------

def test_estimate_at_huge_level_is_one():
    r = estimate(EV, model(), 1e9, 100, seed=1)
    assert r.estimate == 1.0 and r.hits == 100
    assert r.params["event"] == EV.describe()


def test_estimate_requires_100_replicas():
    with pytest.raises(ValueError):
        estimate(EV, model(), 0.0, 99, seed=1)


def test_nested_events_ordered_on_each_replica():
    big = AdmissibleEvent(0.5, 2.5)  # implies the smaller crossing
    ind = indicators(model(), [EV, big], [0.0], 60, seed=2)[:, :, 0]
    assert np.all(ind[:, 0] >= ind[:, 1])


def test_levels_coupled_monotone():
    levels = np.linspace(-1, 1, 9)
    ind = indicators(model(delta=0.1), [EV], levels, 60, seed=3)[:, 0, :]
    assert np.all(np.diff(ind.astype(int), axis=1) >= 0)


def test_workers_do_not_change_results():
    a = indicators(model(), [EV], [0.0, 0.3], 24, seed=4, workers=1)
    b = indicators(model(), [EV], [0.0, 0.3], 24, seed=4, workers=2)
    assert np.array_equal(a, b)


def test_replica_sets_are_independent_streams():
    a = indicators(model(), [EV], [0.0], 60, seed=4, replica_set=0)
    b = indicators(model(), [EV], [0.0], 60, seed=4, replica_set=1)
    assert not np.array_equal(a, b)


def test_thresholds_agree_with_indicators():
    thr = event_thresholds(model(delta=0.05), EV, 40, seed=6)
    levels = [-0.5, 0.0, 0.5]
    ind = indicators(model(delta=0.05), [EV], levels, 40, seed=6)[:, 0, :]
    for a, l in enumerate(levels):
        assert np.array_equal(thr <= l, ind[:, a])


# -- bisection ---------------------------------------------------------------------

def test_bisect_sorted_recovers_empirical_median():
    thr = np.random.default_rng(0).normal(0.1, 0.2, 2000)
    level, p_lo, p_hi, _ = bisect_sorted(thr, 0.5, (-1, 1), tol=1e-6)
    assert p_lo <= 0.5 <= p_hi
    a, b = level_interval(thr, 0.5)
    assert a <= level <= b
    assert abs(level - 0.1) < 0.03


def test_bisection_stops_at_monte_carlo_resolution():
    thr = np.random.default_rng(1).normal(0, 1, 400)
    _, _, _, coarse = bisect_sorted(thr, 0.5, (-4, 4), tol=1e-9)
    assert coarse < 30  # far fewer than needed to reach 1e-9


def test_bisect_lc_non_bracketed_with_full_ternary_noise():
    with pytest.raises(BisectionNonBracketed):
        bisect_lc(model(delta=1.0), [4], replicas=100, seed=1, bracket=(-0.5, 0.5))


def test_bisect_lc_p_star_one():
    with pytest.raises(BisectionNonBracketed):
        bisect_lc(model(), [4], p_star=1.0, replicas=100, seed=1, bracket=(-0.2, 0.2))
    rep = bisect_lc(model(), [4], p_star=1.0, replicas=100, seed=1, bracket=(-50, 50))
    assert rep.scales[0].p_hi == 1.0


def test_bisect_lc_report():
    rep = bisect_lc(model(), [4, 8], replicas=100, seed=2)
    assert len(rep.scales) == 2
    for s in rep.scales:
        assert s.p_lo <= 0.5 <= s.p_hi
        assert s.ci_lo <= s.level + 0.05 and s.level - 0.05 <= s.ci_hi
    assert math.isfinite(rep.extrapolated)
    assert rep.params["event"] == CrossingEvent((4.0, 4.0)).describe()


# -- decay fits ----------------------------------------------------------------------

def test_fit_recovers_synthetic_slope():
    R = np.arange(1, 9, dtype=float)
    fit = fit_probabilities(R, np.exp(-2 * R + 0.3))
    assert abs(fit.slope - 2) < 0.01
    assert fit.intercept == pytest.approx(-0.3)
    assert fit.accepted


def test_fit_rejects_zero_probability():
    with pytest.raises(InsufficientHits):
        fit_probabilities([1, 2, 3, 4], [0.5, 0.1, 0.01, 0.0])


def test_decay_fit_validation():
    with pytest.raises(ValueError):
        fit_probabilities([1, 2, 3], [0.5, 0.2, 0.1])
    with pytest.raises(ValueError):
        fit_probabilities([1, 3, 2, 4], [0.5, 0.2, 0.1, 0.05])


def test_flat_data_not_accepted():
    fit = fit_probabilities([1, 2, 3, 4, 5], [0.5, 0.52, 0.49, 0.5, 0.51])
    assert not fit.accepted


def test_fit_decay_insufficient_hits():
    with pytest.raises(InsufficientHits):
        fit_decay(model(), [2, 4, 6, 8], -0.6, 30, seed=1)


def test_fit_decay_arm_counts_nonincreasing():
    fit = fit_decay(model(), [1, 1.5, 2, 2.5], -0.2, 60, seed=2)
    assert np.all(np.diff(fit.hits) <= 0)
    assert fit.n == 60
    with pytest.raises(ValueError):
        fit_decay(model(), [1, 2, 3, 4], 0.0, 10, kind="spiral")


# -- comparisons -----------------------------------------------------------------------

def test_compare_large_sprinkle_is_trivial():
    row = compare(0.0, 100.0, model(), [EV], 100, seed=1)[0]
    assert row.lower.estimate == 0.0 and row.upper.estimate == 1.0
    assert row.verdict


def test_compare_zero_sprinkle_arms_coincide():
    row = compare(0.1, 0.0, model(), [EV], 100, seed=2)[0]
    assert row.lower.hits == row.upper.hits
    assert row.lower.params["replica_set"] == row.upper.params["replica_set"]
    assert row.middle.params["replica_set"] != row.lower.params["replica_set"]


def test_compare_is_deterministic_and_reports_margins():
    a = compare(0.0, 0.3, model(), [EV], 100, seed=3)[0].to_dict()
    b = compare(0.0, 0.3, model(), [EV], 100, seed=3)[0].to_dict()
    assert a == b
    assert {"margin_lower", "margin_upper", "verdict"} <= set(a)


def test_compare_scales_small_N():
    rows = compare_scales(0.0, model(N=2.0), model(N=4.0), 0.6, [EV, AdmissibleEvent(0.5, 2.5)], 100, seed=4)
    for row in rows:
        assert row.variant == "N-vs-2N"
        assert row.lower.estimate <= row.upper.estimate
        assert row.verdict


def test_local_gap_tail_is_a_frequency():
    r = local_gap_tail(BF2, 4.0, 0.1, 30, seed=1)
    assert 0 <= r.estimate <= 1 and r.n == 30
    assert local_gap_tail(BF2, 4.0, 0.1, 30, seed=1, eps=0.25, h=0.25, which=1).hits == 0


# -- Cameron-Martin ----------------------------------------------------------------------

def test_cameron_martin_zero_shift():
    res = cameron_martin_check([[1.0]], [0.0], lambda g: g[:, 0] >= 0, 4000, seed=1)
    assert res.weight_mean == 1.0 and res.weight_se == 0.0
    assert abs(res.reweighted - 0.5) < 4 * 0.5 / math.sqrt(4000)


def test_cameron_martin_one_point_against_normal_cdf():
    # P[g + 1 >= 0] = Phi(1)
    res = cameron_martin_check([[1.0]], [1.0], lambda g: g[:, 0] >= 0, 20000, seed=2)
    target = normal_cdf(1.0)
    assert abs(res.direct.estimate - target) < 4 * res.direct.sigma
    assert abs(res.reweighted - target) < 4 * res.reweighted_se
    assert res.discrepancy_sigma < 4


def test_cameron_martin_correlated_pair():
    K = np.array([[1.0, 0.6], [0.6, 1.0]])
    res = cameron_martin_check(K, [0.5, -0.2], lambda g: (g[:, 0] > 0.3) & (g[:, 1] > -0.5), 20000, seed=3)
    assert res.discrepancy_sigma < 4
    assert abs(res.weight_mean - 1) < 4 * res.weight_se


def test_gaussian_factor():
    K = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = gaussian_factor(K)
    assert np.allclose(L @ L.T, K)
    L0 = gaussian_factor(np.array([[1.0, 1.0], [1.0, 1.0]]))  # singular but PSD
    assert np.allclose(L0 @ L0.T, 1.0)
    with pytest.raises(NotPSD):
        gaussian_factor([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPSD):
        gaussian_factor([[1.0, 0.5], [0.0, 1.0]])


def test_cameron_martin_argument_checks():
    with pytest.raises(ValueError):
        cameron_martin_check(np.eye(2), [1.0], lambda g: g[:, 0] > 0, 10)
    with pytest.raises(ValueError):
        cameron_martin_check(np.eye(65), np.zeros(65), lambda g: g[:, 0] > 0, 10)
