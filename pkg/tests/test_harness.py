import math

import numpy as np
import pytest
from scipy import stats

from kingldp import harness, rates
from kingldp.harness import EventSpec, estimate


def test_event_scale_discipline():
    assert EventSpec("Wn", ">=", 2.25, 100).scale == "sqrt_n"
    assert EventSpec("Wn", "<=", 1.5, 100).scale == "n"
    assert EventSpec("nTn", ">=", 2.5, 10).scale == "n"
    assert EventSpec("epsNeps", ">=", 3, 0.1).scale_value == pytest.approx(10.0)
    with pytest.raises(ValueError):
        EventSpec("Wn", ">=", 2.25, 100, scale="n")
    with pytest.raises(ValueError):
        EventSpec("Wn", "<=", 1.5, 100, scale="sqrt_n")
    with pytest.raises(ValueError):
        EventSpec("nTn", "==", 2, 10)
    with pytest.raises(ValueError):
        EventSpec("Tn", ">=", 2, 10)
    with pytest.raises(ValueError):
        EventSpec("nTn", ">=", 2, 2.5)


def test_analytic_rates_of_events():
    assert EventSpec("nTn", ">=", 2.5, 10).analytic_rate() == pytest.approx(rates.eval_I(2.5).value)
    assert EventSpec("nTn", ">=", 1.5, 10).analytic_rate() == 0.0
    assert EventSpec("Wn", ">=", 2.25, 10).analytic_rate() == 0.5
    assert EventSpec("Wn", "<=", 0.9, 10).analytic_rate() == math.inf
    assert EventSpec("epsNeps", ">=", 3.0, 0.1).analytic_rate() == pytest.approx(rates.eval_I_hat(3.0).value)


def test_wilson_coverage():
    rng = np.random.default_rng(2024)
    trials = 400
    covered = 0
    ps = rng.uniform(0.02, 0.98, size=500)
    for p in ps:
        lo, hi = harness.wilson_interval(int(rng.binomial(trials, p)), trials)
        covered += lo <= p <= hi
    assert covered / 500 >= 0.93


def test_wilson_edges():
    lo, hi = harness.wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = harness.wilson_interval(100, 100)
    assert hi == 1.0 and lo > 0.95
    with pytest.raises(ValueError):
        harness.wilson_interval(0, 0)


def test_estimate_invariants():
    est = estimate(EventSpec("nTn", ">=", 2.5, 20), 20000, 5)
    assert est.hits <= est.trials
    assert est.ci_low <= est.p_hat <= est.ci_high
    assert est.rate_hat == pytest.approx(-math.log(est.p_hat) / 20)
    assert est.rate_ci[0] <= est.rate_hat <= est.rate_ci[1]


def test_estimate_needs_trials():
    with pytest.raises(ValueError):
        estimate(EventSpec("nTn", ">=", 2.5, 20), 999, 5)


@pytest.mark.parametrize("n", [2, 20, 100])
@pytest.mark.parametrize("seed", [0, 1, 99])
def test_wn_below_one_never_hits(n, seed):
    est = estimate(EventSpec("Wn", "<=", 0.99, n), 2000, seed)
    assert est.hits == 0 and est.p_hat == 0.0
    assert est.lower_bound_only
    assert est.rate_ci[1] == math.inf
    assert not harness.within_policy(est, math.inf)


def test_nTn_at_two_matches_exact_law():
    # {n T_n >= 2} = {T_10 >= 0.2} = {N_0.2 >= 11}
    exact = 1.0 - math.fsum(rates.tavare_pmf(0.2, m) for m in range(1, 11))
    est = estimate(EventSpec("nTn", ">=", 2.0, 10), 10**5, 17)
    assert est.ci_low <= exact <= est.ci_high
    assert 0.2 < est.p_hat < 0.8


def test_line_count_events_use_shifted_index():
    # {eps N_eps >= 3} with eps = 0.5 is {N >= 6} = {T_5 >= 0.5}
    exact = math.fsum(rates.tavare_pmf(0.5, m) for m in range(6, 40))
    est = estimate(EventSpec("epsNeps", ">=", 3.0, 0.5), 40000, 3)
    assert est.ci_low <= exact <= est.ci_high
    # {eps N_eps <= 2} is {N <= 4} = {T_4 < 0.5}
    exact = math.fsum(rates.tavare_pmf(0.5, m) for m in range(1, 5))
    est = estimate(EventSpec("epsNeps", "<=", 2.0, 0.5), 40000, 3)
    assert est.ci_low <= exact <= est.ci_high


@pytest.mark.parametrize("event", [EventSpec("nTn", ">=", 2.3, 30), EventSpec("Wn", "<=", 1.6, 20)])
def test_estimate_reproducible_across_threads(event):
    runs = [estimate(event, 30000, 42, threads=t) for t in (1, 4, 8)]
    assert runs[0] == runs[1] == runs[2]


def test_auto_trials():
    ev = EventSpec("nTn", ">=", 2.5, 40)
    assert harness.auto_trials(ev) == math.ceil(200 * math.exp(40 * rates.eval_I(2.5).value))
    assert harness.auto_trials(EventSpec("nTn", ">=", 1.0, 40)) == harness.MIN_TRIALS
    assert harness.auto_trials(EventSpec("epsNeps", ">=", 3.0, 0.01)) == harness.TRIAL_CAP
    assert harness.auto_trials(EventSpec("epsNeps", ">=", 3.0, 0.01), cap=5000) == 5000


def test_policy_slack():
    est = estimate(EventSpec("nTn", ">=", 2.5, 20), 20000, 5)
    kappa = 1 + 4 / 20
    assert harness.within_policy(est, est.rate_ci[0] / kappa)
    assert not harness.within_policy(est, est.rate_ci[0] / kappa * 0.999)
    assert harness.within_policy(est, est.rate_ci[1] * kappa)


def test_rate_curve_rows_and_trend():
    curve = harness.empirical_rate_curve("nTn", ">=", 2.5, [20, 10], 20000, rng_seed=1)
    assert [r[0] for r in curve.rows] == [10, 20]
    assert curve.analytic == pytest.approx(rates.eval_I(2.5).value)
    assert -1.0 <= curve.kendall_tau <= 1.0
    # the epsilon grid is ordered by the scale 1/eps
    curve = harness.empirical_rate_curve("epsNeps", ">=", 3.0, [0.5, 1.0], 5000, rng_seed=1)
    assert [r[0] for r in curve.rows] == [1.0, 0.5]


def test_point_seeds_distinct():
    assert harness.point_seed(1, 0) != harness.point_seed(1, 1)
    assert harness.point_seed(1, 0) == harness.point_seed(1, 0)


def test_ks_identical_and_separated():
    a = np.random.default_rng(0).standard_exponential(500)
    assert harness.ks_two_sample(a, a) == (0.0, 1.0)
    rng = np.random.default_rng(1)
    d, p = harness.ks_two_sample(rng.exponential(1.0, 10**4), rng.exponential(2.0, 10**4))
    assert p < 1e-6
    # F(x) = 1 - e^-x vs 1 - e^-x/2 differ by at most 1/4
    assert d == pytest.approx(0.25, abs=0.02)


def test_ks_statistic_matches_scipy():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=700), rng.normal(0.1, size=900)
    d, p = harness.ks_two_sample(a, b)
    ref = stats.ks_2samp(a, b, method="asymp")
    assert d == pytest.approx(ref.statistic, abs=1e-15)
    assert p == pytest.approx(ref.pvalue, rel=0.05)


def test_ks_needs_samples():
    with pytest.raises(ValueError):
        harness.ks_two_sample(np.ones(99), np.ones(200))


def test_cramer_selfcheck_matches_exact_finite_n():
    rep = harness.cramer_selfcheck(0.5, [10, 20], trials=400000, rng_seed=4)
    assert rep.direction == "<="
    assert rep.analytic == pytest.approx(0.193147, abs=1e-6)
    for n, est, exact_rate, _ in rep.rows:
        exact_p = math.exp(-n * exact_rate)
        assert exact_p == pytest.approx(stats.gamma.cdf(0.5 * n, n), rel=1e-10)
        assert abs(est.p_hat - exact_p) < 4 * math.sqrt(exact_p * (1 - exact_p) / est.trials)
    rep = harness.cramer_selfcheck(2.0, [10], trials=200000, rng_seed=4)
    assert rep.direction == ">="
    _, est, exact_rate, _ = rep.rows[0]
    exact_p = stats.gamma.sf(20.0, 10)
    assert abs(est.p_hat - exact_p) < 4 * math.sqrt(exact_p * (1 - exact_p) / est.trials)


def test_cramer_at_center():
    rep = harness.cramer_selfcheck(1.0, [50], trials=20000, rng_seed=4)
    assert rep.analytic == 0.0
    # P(mean <= 1) is close to 1/2
    assert rep.rows[0][1].rate_hat < math.log(2.2) / 50
    with pytest.raises(ValueError):
        harness.cramer_selfcheck(0.0, [10])


def test_simulate_statistic_blocks():
    a, meta = harness.simulate_statistic("nTn", 10, 9000, 3, threads=1)
    b, _ = harness.simulate_statistic("nTn", 10, 9000, 3, threads=4)
    assert np.array_equal(a, b)
    assert meta["truncation_K"] == 256 and meta["bias_bound"] == 2 / 256
    w, meta = harness.simulate_statistic("Wn", 1, 1000, 3)
    assert np.all(w == 1.0) and meta["truncation_K"] is None
    with pytest.raises(ValueError):
        harness.simulate_statistic("Wn", 2.5, 10, 3)
    with pytest.raises(ValueError):
        harness.simulate_statistic("Xn", 2, 10, 3)
