"""Monte Carlo estimators: intervals, fits, hazard floors, speeds, CLT."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rumorline.batch import batch_taus
from rumorline.engine import AllOccupied, BernoulliSites
from rumorline.estimators import (
    clt_check,
    cluster_moments,
    dkw_epsilon,
    hazard_check,
    ks_critical_value,
    percolation_prob,
    psi_squared_from_increments,
    speed_lln,
    survival_tail,
    wilson_interval,
    wls_log_fit,
)
from rumorline.laws import Constant, FiniteSupport, Geometric, GeometricMin1, PolynomialTail
from rumorline.oracles import reactivated_front_speed_unit_radius
from rumorline.renewal import gather_increments_pool, speed_from_renewals
from rumorline.rng import derive_seed_array

# P(tau = 1) = 1/2, P(tau = 2) = 1/32, P(tau > 2) = 15/32
BENCH = FiniteSupport([0.5, 0.0, 0.5])


# ----------------------------------------------------------------------
# Wilson intervals
# ----------------------------------------------------------------------


def test_wilson_textbook_value():
    lo, hi = wilson_interval(5, 10, 0.95)
    assert lo == pytest.approx(0.23659, abs=1e-5)
    assert hi == pytest.approx(0.76341, abs=1e-5)


def test_wilson_endpoints_snap_exactly():
    lo, hi = wilson_interval(0, 50, 0.99)
    assert lo == 0.0 and 0.0 < hi < 1.0
    lo, hi = wilson_interval(50, 50, 0.99)
    assert 0.0 < lo < 1.0 and hi == 1.0


@given(
    k=st.integers(min_value=0, max_value=500),
    n=st.integers(min_value=1, max_value=500),
    level=st.sampled_from([0.9, 0.95, 0.99, 0.999]),
)
def test_wilson_brackets_the_point(k, n, level):
    k = min(k, n)
    lo, hi = wilson_interval(k, n, level)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_wilson_vectorized_matches_scalar():
    ks = np.array([0, 3, 17, 40, 40])
    lo, hi = wilson_interval(ks, 40, 0.95)
    for i, k in enumerate(ks):
        slo, shi = wilson_interval(int(k), 40, 0.95)
        assert lo[i] == slo and hi[i] == shi


def test_wilson_coverage_near_nominal():
    rng = np.random.default_rng(7)
    p = 15 / 32
    ks = rng.binomial(400, p, size=3000)
    lo, hi = wilson_interval(ks, 400, 0.99)
    coverage = float(((lo <= p) & (p <= hi)).mean())
    assert coverage >= 0.975


# ----------------------------------------------------------------------
# DKW band
# ----------------------------------------------------------------------


def test_dkw_epsilon_values():
    assert dkw_epsilon(10**5, 0.99) == pytest.approx(0.00514700, abs=1e-8)
    assert dkw_epsilon(4 * 10**5, 0.99) == pytest.approx(0.00514700 / 2, abs=1e-8)


def test_dkw_band_covers_uniform_ecdf():
    rng = np.random.default_rng(11)
    u = np.sort(rng.random(2000))
    ecdf_hi = np.arange(1, 2001) / 2000
    ecdf_lo = np.arange(0, 2000) / 2000
    sup = max(np.abs(ecdf_hi - u).max(), np.abs(u - ecdf_lo).max())
    assert sup <= dkw_epsilon(2000, 0.99)


# ----------------------------------------------------------------------
# weighted log-linear fits
# ----------------------------------------------------------------------


def test_wls_recovers_exact_exponential():
    x = np.arange(3, 26)
    p = np.exp(0.2 - 0.3 * x)
    fit = wls_log_fit(x, p, 10**4)
    assert fit.slope == pytest.approx(-0.3, abs=1e-12)
    assert fit.intercept == pytest.approx(0.2, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.dropped == 0 and fit.n_points == x.size


def test_wls_drops_degenerate_probabilities():
    x = np.arange(6)
    p = np.array([1.0, 0.5, 0.25, 0.125, 0.0, 0.0])
    fit = wls_log_fit(x, p, 100)
    assert fit.dropped == 3
    assert fit.n_points == 3
    assert fit.slope == pytest.approx(math.log(0.5), abs=1e-12)


def test_wls_too_few_points_is_nan():
    fit = wls_log_fit([1, 2, 3], [0.0, 0.5, 1.0], 100)
    assert fit.n_points == 1 and fit.dropped == 2
    assert math.isnan(fit.slope) and math.isnan(fit.r_squared)


# ----------------------------------------------------------------------
# extinction-time survival
# ----------------------------------------------------------------------


def test_survival_anchors_on_exact_masses():
    res = survival_tail(BENCH, [1, 2], 200_000, seed=5, level=0.999)
    for p_true, lo, hi in zip([0.5, 15 / 32], res.ci_low, res.ci_high):
        assert lo <= p_true <= hi


def test_survival_tail_is_loglinear_for_bounded_law():
    res = survival_tail(BENCH, range(3, 18), 150_000, seed=3)
    assert res.fit.slope < 0
    assert res.fit.r_squared >= 0.97
    assert res.decay_rate == -res.fit.slope


def test_survival_grid_validation():
    with pytest.raises(ValueError):
        survival_tail(BENCH, [], 100)
    with pytest.raises(ValueError):
        survival_tail(BENCH, [-1, 3], 100)


def test_survival_json_roundtrip():
    res = survival_tail(BENCH, [1, 3], 2000, seed=1)
    d = json.loads(json.dumps(res.to_json_dict()))
    assert d["ns"] == [1, 3]
    assert d["replicates"] == 2000
    assert set(d) >= {"p_hat", "ci_low", "ci_high", "fit", "decay_rate"}


# ----------------------------------------------------------------------
# hazard floor
# ----------------------------------------------------------------------


@pytest.mark.parametrize(
    ("law", "bound"),
    [(BENCH, 0.0625), (Geometric(0.5), 0.08342)],
    ids=["bounded", "geometric"],
)
def test_hazard_floor_holds(law, bound):
    res = hazard_check(law, 10, 60_000, seed=11)
    assert res.bound == pytest.approx(bound, abs=5e-4)
    assert all(r.ok for r in res.rows if r.ok is not None)
    assert res.all_ok


def test_hazard_immediate_death_is_exact():
    res = hazard_check(Constant(0), 0, 2000, seed=0)
    (row,) = res.rows
    assert row.h_hat == 1.0 and res.bound == 1.0 and row.ok
    assert res.all_ok


def test_hazard_skips_thin_rows():
    res = hazard_check(BENCH, 30, 400, seed=2)
    thin = [r for r in res.rows if r.ok is None]
    assert thin and all("survivors" in r.note for r in thin)
    assert all(r.alive < 25 for r in thin)
    # skipped rows do not poison the verdict
    assert res.all_ok == all(r.ok for r in res.rows if r.ok is not None)


def test_hazard_respects_site_environment():
    # dilution only makes extinction easier; the check still runs and reports
    res = hazard_check(BENCH, 5, 20_000, env=BernoulliSites(0.7), seed=4)
    assert any(r.ok is not None for r in res.rows)


# ----------------------------------------------------------------------
# survival probability and cluster moments
# ----------------------------------------------------------------------


def test_percolation_prob_anchors():
    sub = percolation_prob(BENCH, 600, 40_000, seed=6)
    assert sub.point == 0.0 and sub.ci_high < 5e-4
    sup = percolation_prob(GeometricMin1(0.5), 64, 4000, seed=6)
    assert sup.point == 1.0 and sup.ci_low > 0.99
    assert sup.censored == 4000  # every path still alive at the horizon


def test_cluster_moments_point_mass():
    res = cluster_moments(Constant(0), 5000, seed=3)
    assert res.mean == 1.0 and res.variance == 0.0
    assert res.censored == 0 and not res.censored_flag


def test_cluster_moments_match_raw_arrays():
    res = cluster_moments(BENCH, 30_000, cap=512, seed=9)
    seeds = derive_seed_array(9, "cluster", np.arange(30_000))
    raw = batch_taus(seeds, BENCH, AllOccupied(), horizon=512)
    m = raw.cluster[~raw.censored].astype(np.float64)
    assert res.mean == pytest.approx(m.mean(), rel=1e-12)
    assert res.variance == pytest.approx(m.var(ddof=1), rel=1e-12)
    assert res.censored == int(raw.censored.sum())
    assert res.mean_ci[0] < res.mean < res.mean_ci[1]
    assert res.tail_fit.slope < 0


def test_cluster_moments_flag_when_cap_binds():
    with pytest.warns(UserWarning, match="cap"):
        res = cluster_moments(BENCH, 4000, cap=8, seed=1)
    assert res.censored_flag and res.censored > 40


# ----------------------------------------------------------------------
# speed
# ----------------------------------------------------------------------


@pytest.mark.parametrize("c", [1, 2, 3])
def test_speed_lln_exact_for_constant(c):
    res = speed_lln(Constant(c), 200, replicates=8, seed=0)
    assert res.point == float(c)
    assert res.ci_low == res.ci_high == float(c)


def test_speed_lln_warns_when_paths_die():
    with pytest.warns(UserWarning, match="extinct"):
        res = speed_lln(BENCH, 300, replicates=16, seed=5)
    assert res.point < 1.0


def test_speed_lln_needs_replicates():
    with pytest.raises(ValueError, match="replicates"):
        speed_lln(GeometricMin1(0.5), 100, replicates=1)


def test_speed_lln_agrees_with_renewal_estimate():
    law = GeometricMin1(0.5)
    lln = speed_lln(law, 1024, replicates=48, seed=2)
    ren = speed_from_renewals(gather_increments_pool(21, law, 20_000))
    assert lln.point >= 1.0 and ren.point >= 1.0
    assert lln.ci_low <= ren.ci_high and ren.ci_low <= lln.ci_high


def test_speed_lln_reactivated_matches_two_state_oracle():
    law = FiniteSupport([0.5, 0.5])
    mu_true = reactivated_front_speed_unit_radius(0.5, 0.5)
    assert mu_true == pytest.approx(1 / 3, abs=1e-15)
    res = speed_lln(law, 4000, replicates=32, p2=0.5, seed=4)
    assert res.ci_low <= mu_true <= res.ci_high
    assert res.extra["p2"] == 0.5


def test_speed_lln_reactivated_rejects_dilution():
    with pytest.raises(ValueError, match="occupied"):
        speed_lln(FiniteSupport([0.5, 0.5]), 100, p2=0.5, env=BernoulliSites(0.7))


# ----------------------------------------------------------------------
# CLT check
# ----------------------------------------------------------------------


def test_ks_critical_values():
    assert ks_critical_value(2000, 0.01) == pytest.approx(0.0363946, abs=1e-6)
    assert ks_critical_value(100, 0.05, lilliefors=True) == pytest.approx(0.0886, abs=1e-6)
    with pytest.raises(ValueError):
        ks_critical_value(100, 0.2, lilliefors=True)


def test_psi_squared_hand_value():
    psi2 = psi_squared_from_increments(np.array([1, 2]), np.array([2, 3]))
    assert psi2 == pytest.approx(4 / 27, abs=1e-15)


def test_clt_degenerate_motion_is_a_point_mass():
    rep = clt_check(Constant(2), 50, 20, mu_source="fixed", mu_value=2.0)
    assert rep.psi_hat == 0.0 and rep.ks_distance == 0.0 and rep.ks_ok
    rep = clt_check(Constant(2), 50, 20, mu_source="fixed", mu_value=1.9)
    assert rep.psi_hat == 0.0 and rep.ks_distance == 1.0 and not rep.ks_ok


def test_clt_preconditions():
    with pytest.raises(ValueError, match="mass"):
        clt_check(FiniteSupport([0.5, 0.5]), 100, 50)
    with pytest.raises(ValueError, match="moments"):
        clt_check(PolynomialTail(3.0, 1.0), 100, 50)
    with pytest.raises(ValueError, match="mu_source"):
        clt_check(GeometricMin1(0.5), 100, 50, mu_source="guess")
    with pytest.raises(ValueError, match="mu_value"):
        clt_check(GeometricMin1(0.5), 100, 50, mu_source="fixed")


def test_clt_small_run_is_gaussian():
    rep = clt_check(GeometricMin1(0.5), 256, 400, mu_pairs=30_000, seed=0)
    assert rep.ks_ok
    assert abs(rep.mean_z) < 0.25
    assert 1.2 < rep.psi_hat < 2.3
    assert rep.mu_source == "renewal"
    assert rep.mu_hat == pytest.approx(2.2565, abs=0.02)


def test_clt_lln_centering_branch():
    rep = clt_check(GeometricMin1(0.5), 128, 200, mu_source="lln", seed=1)
    assert rep.mu_source == "lln"
    assert rep.ks_ok


def test_clt_psi_agrees_with_increment_formula():
    pool = gather_increments_pool(33, GeometricMin1(0.5), 40_000)
    psi2 = psi_squared_from_increments(pool[0], pool[1])
    rep = clt_check(GeometricMin1(0.5), 256, 400, mu_pairs=30_000, seed=0)
    assert rep.psi_hat**2 == pytest.approx(psi2, rel=0.2)
