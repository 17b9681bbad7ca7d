"""Regeneration ledgers: sigma detection, tau scanning, speed, diagnostics."""

import numpy as np
import pytest
from scipy import stats as sps

from rumorline.batch import batch_front_positions
from rumorline.engine import AllOccupied, Horizon, UntilExtinct, run
from rumorline.laws import (
    Constant,
    ExactBounded,
    FiniteSupport,
    Geometric,
    GeometricMin1,
    HeavyTailError,
    PolynomialTail,
    TailBudget,
    overshoot_cdf,
    overshoot_query,
)
from rumorline.renewal import (
    NoRenewalsFound,
    RenewalLedger,
    build_ledger,
    detect_sigma,
    detect_taus,
    gather_increments,
    gather_increments_fast,
    gather_increments_pool,
    iid_diagnostics,
    one_sided_renewal_samples,
    speed_from_renewals,
    static_field,
    verify_left_containment,
)
from rumorline.rng import derive_seed, derive_seed_array

BOUNDED_MIN1 = FiniteSupport([0.0, 0.5, 0.5])  # bounded, no mass at zero


def dict_field(values, default=0):
    return lambda v: values.get(v, default)


# ----------------------------------------------------------------------
# sigma
# ----------------------------------------------------------------------


def test_sigma_constant_laws():
    assert detect_sigma(dict_field({}), Constant(1), ExactBounded()) == (1, True)
    assert detect_sigma(dict_field({}), Constant(0), ExactBounded()) == (1, True)


def test_sigma_shallow_violator():
    # radius 3 at depth 1 violates; depths 2 and 3 do not -> sigma = 2
    law = FiniteSupport([0.25, 0.25, 0.25, 0.25])
    field = dict_field({-1: 3, -2: 0, -3: 0})
    assert detect_sigma(field, law, ExactBounded()) == (2, True)


def test_sigma_deepest_violator_wins():
    law = FiniteSupport([0.5, 0, 0, 0, 0, 0.5])
    field = dict_field({-1: 0, -2: 3, -3: 5, -4: 0})
    assert detect_sigma(field, law, ExactBounded()) == (4, True)


def test_sigma_tail_budget_sets_scan_depth():
    # Geometric(0.5): P(I > j) summed past depth d is 0.5^(d+1), so a budget
    # of 0.25 scans only depth 1 and misses the violator planted at depth 2.
    law = Geometric(0.5)
    field = dict_field({-2: 5})
    assert detect_sigma(field, law, TailBudget(0.25)) == (1, False)
    assert detect_sigma(field, law, TailBudget(1e-9)) == (3, False)


def test_sigma_bounded_law_certified_under_tail_budget():
    field = dict_field({-1: 2})
    assert detect_sigma(field, BOUNDED_MIN1, TailBudget(0.1)) == (2, True)


def test_sigma_policy_errors():
    with pytest.raises(ValueError):
        detect_sigma(dict_field({}), Geometric(0.5), ExactBounded())
    with pytest.raises(HeavyTailError):
        detect_sigma(dict_field({}), PolynomialTail(0.5, 0.5), TailBudget(0.01))
    with pytest.raises(TypeError):
        detect_sigma(dict_field({}), Constant(1), policy="exact")


def test_sigma_matches_engine_field():
    # a violator scan against the same keyed field the engine consults
    law = BOUNDED_MIN1
    for seed in range(200, 230):
        field = static_field(seed, law)
        sigma, certified = detect_sigma(field, law, ExactBounded())
        assert certified
        assert sigma == 1 + max((j for j in (1,) if field(-j) > j), default=0)


# ----------------------------------------------------------------------
# ledgers
# ----------------------------------------------------------------------


def test_ledger_invariants_on_runs():
    for seed in range(300, 320):
        led = build_ledger(seed, BOUNDED_MIN1, horizon=512)
        assert led.sigma_certified
        assert led.taus[0][0] == led.sigma
        ts = [t for t, _ in led.taus]
        assert ts == sorted(set(ts))
        d_tau, d_r = led.increments()
        assert (d_tau >= 1).all() and (d_r >= 1).all()
        assert led.n_increments == d_tau.size == max(len(led.taus) - 2, 0)
        # each recorded tau_j really is a unit advance of the right front
        traj = run(seed, BOUNDED_MIN1, AllOccupied(), Horizon(512))
        for t, r in led.taus[1:]:
            assert traj.rs[t] == r
            assert traj.rs[t] - traj.rs[t - 1] == 1


def test_build_ledger_warns_on_mass_at_zero():
    with pytest.warns(UserWarning, match="mass 0.5 at"):
        build_ledger(1, FiniteSupport([0.5, 0.0, 0.5]), horizon=8)


def test_detect_taus_truncations():
    traj = run(5, Constant(2), AllOccupied(), Horizon(3))
    led = detect_taus(traj, sigma=5, sigma_certified=True)
    assert led.truncated and led.truncation_reason == "trajectory ends before sigma"
    assert led.taus == [] and led.n_increments == 0

    # an extinct run is flagged: its ledger cannot extend past death
    traj = run(11, FiniteSupport([0.5, 0.0, 0.5]), AllOccupied(), UntilExtinct(step_cap=64))
    assert traj.extinct
    led = detect_taus(traj, sigma=0, sigma_certified=True)
    assert led.truncated and led.truncation_reason == "extinct before horizon"


def test_ledger_csv_golden():
    led = RenewalLedger(1, True, [(1, 2), (3, 5), (5, 9)])
    assert led.to_csv() == (
        "j,tau_j,r_tau_j,d_tau,d_r\n"
        "0,1,2,,\n"
        "1,3,5,2,3\n"
        "2,5,9,2,4\n"
    )


def test_constant_one_every_step_renews():
    led = build_ledger(9, Constant(1), horizon=64)
    assert led.sigma == 1
    assert [t for t, _ in led.taus] == list(range(1, 65))
    rep = speed_from_renewals(led)
    assert rep.point == 1.0
    assert rep.ci_low == rep.ci_high == 1.0
    assert rep.extra["sigma_certified"] is True


def test_constant_two_never_renews():
    led = build_ledger(9, Constant(2), horizon=64)
    assert len(led.taus) == 1  # only the sigma entry
    assert led.n_increments == 0
    with pytest.raises(NoRenewalsFound):
        speed_from_renewals(led)


# ----------------------------------------------------------------------
# speed arithmetic
# ----------------------------------------------------------------------


def test_speed_arithmetic_exact():
    rep = speed_from_renewals((np.array([1, 1, 2]), np.array([2, 2, 4])))
    assert rep.point == 2.0
    assert rep.ci_low == rep.ci_high == 2.0  # residuals vanish identically
    assert rep.replicates == 3
    assert "sigma_certified" not in rep.extra


def test_speed_single_increment_has_infinite_interval():
    rep = speed_from_renewals((np.array([2]), np.array([3])))
    assert rep.point == 1.5
    assert rep.ci_low == -np.inf and rep.ci_high == np.inf


def test_speed_empty_raises():
    with pytest.raises(NoRenewalsFound):
        speed_from_renewals((np.array([], dtype=np.int64), np.array([], dtype=np.int64)))


# ----------------------------------------------------------------------
# pooled increments and diagnostics
# ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def pooled_min1():
    d_tau, d_r, info = gather_increments(42, GeometricMin1(0.5), 2000)
    return d_tau, d_r, info


def test_gather_increments_counts_and_flags(pooled_min1):
    d_tau, d_r, info = pooled_min1
    assert d_tau.size == d_r.size == 2000
    assert info["runs"] >= 1
    assert info["sigma_certified"] is False  # unbounded law, tail budget
    _, _, info2 = gather_increments(42, BOUNDED_MIN1, 50, horizon=512)
    assert info2["sigma_certified"] is True


@pytest.mark.parametrize(
    ("law", "lanes", "horizon"),
    [(GeometricMin1(0.5), 30, 512), (BOUNDED_MIN1, 25, 300)],
    ids=["unbounded", "bounded"],
)
def test_gather_fast_matches_per_replicate_ledgers(law, lanes, horizon):
    d_tau, d_r, info = gather_increments_fast(99, law, lanes, horizon)
    parts = [
        build_ledger(derive_seed(99, "renewal-run", i), law, horizon).increments()
        for i in range(lanes)
    ]
    assert np.array_equal(d_tau, np.concatenate([p[0] for p in parts]))
    assert np.array_equal(d_r, np.concatenate([p[1] for p in parts]))
    assert info["runs"] == lanes
    assert info["sigma_certified"] == (law.support_bound is not None)


def test_gather_fast_lane_offset_splices():
    law = BOUNDED_MIN1
    whole = gather_increments_fast(7, law, 25, horizon=300)
    head = gather_increments_fast(7, law, 10, horizon=300)
    tail = gather_increments_fast(7, law, 15, horizon=300, lane_offset=10)
    assert np.array_equal(np.concatenate([head[0], tail[0]]), whole[0])
    assert np.array_equal(np.concatenate([head[1], tail[1]]), whole[1])


def test_gather_pool_is_sized_and_reproducible():
    d_tau, d_r, info = gather_increments_pool(123, GeometricMin1(0.5), 5000, horizon=1024)
    d_tau2, d_r2, _ = gather_increments_pool(123, GeometricMin1(0.5), 5000, horizon=1024)
    assert d_tau.size == d_r.size == 5000
    assert np.array_equal(d_tau, d_tau2) and np.array_equal(d_r, d_r2)
    assert info["runs"] % 256 == 0
    assert d_tau.min() >= 1


def test_gather_pool_gives_up_without_regenerations():
    with pytest.raises(NoRenewalsFound):
        gather_increments_pool(0, Constant(2), 10, horizon=32)


def test_iid_diagnostics_on_real_increments(pooled_min1):
    d_tau, d_r, _ = pooled_min1
    diag = iid_diagnostics(d_tau, d_r, seed=7)
    assert diag["n"] == 2000
    for name in ("d_tau", "d_r", "residual"):
        assert abs(diag[f"acf1_{name}"]) < 0.1
        assert diag[f"perm_p_{name}"] > 0.01
    assert diag["ks_halves_p_d_tau"] > 0.01
    assert diag["ks_halves_p_d_r"] > 0.01


def test_iid_diagnostics_synthetic():
    rng = np.random.default_rng(123)
    x = rng.integers(1, 6, size=400)
    y = 2 * x + rng.integers(0, 3, size=400)
    diag = iid_diagnostics(x, y, seed=5)
    assert abs(diag["acf1_d_tau"]) < 4 / np.sqrt(400)
    assert diag["perm_p_d_tau"] > 0.02


def test_iid_diagnostics_flags_alternation():
    alt = np.tile([1, 2], 100)
    diag = iid_diagnostics(alt, 3 * alt, seed=5)
    assert diag["acf1_d_tau"] < -0.9
    assert diag["perm_p_d_tau"] <= 0.01


def test_iid_diagnostics_needs_enough_increments():
    with pytest.raises(NoRenewalsFound):
        iid_diagnostics(np.ones(50), np.ones(50))


# ----------------------------------------------------------------------
# structural invariants
# ----------------------------------------------------------------------


def test_increments_match_one_sided_unit_advance(pooled_min1):
    # between renewals the future of the right front is a fresh one-sided
    # process, so (d_tau, d_r) matches (first unit-advance time, front there)
    d_tau, d_r, _ = pooled_min1
    g, rg, censored = one_sided_renewal_samples(43, GeometricMin1(0.5), 2000)
    assert censored == 0
    assert sps.ks_2samp(d_tau, g, method="asymp").pvalue >= 0.01
    assert sps.ks_2samp(d_r, rg, method="asymp").pvalue >= 0.01


def test_waiting_time_tail_is_geometric_like(pooled_min1):
    d_tau, _, _ = pooled_min1
    ks = np.arange(0, d_tau.max())
    surv = np.array([(d_tau > k).mean() for k in ks])
    keep = surv * d_tau.size >= 10
    x, y = ks[keep], np.log(surv[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    r2 = 1 - np.sum((y - fitted) ** 2) / np.sum((y - y.mean()) ** 2)
    assert slope < 0
    assert r2 >= 0.95


def test_renewal_frequency_dominates_unit_overshoot_mass():
    # every step whose overshoot is exactly one is a renewal, so the renewal
    # rate beyond sigma is at least P(O = 1); counted over 1e5 pooled steps
    law = GeometricMin1(0.5)
    n_lanes, horizon = 100, 1024
    seeds = derive_seed_array(1000, "freq-lane", np.arange(n_lanes))
    hist = batch_front_positions(seeds, law, horizon, history=True)["r_history"]
    advances = np.diff(hist, axis=1)
    taus = 0
    steps = 0
    for i in range(n_lanes):
        sigma, _ = detect_sigma(static_field(int(seeds[i]), law), law, TailBudget(1e-9))
        taus += int((advances[i, sigma:] == 1).sum())
        steps += horizon - sigma
    freq = taus / steps
    q = overshoot_query(law, TailBudget(1e-12))
    p_unit = float(overshoot_cdf(q, 1)) - float(overshoot_cdf(q, 0))
    assert steps >= 100_000
    margin = 3 * np.sqrt(freq * (1 - freq) / steps)
    assert freq >= p_unit + margin  # strict domination, not just equality

    # the batch-counted taus agree with a ledger built on the same seed
    led = build_ledger(int(seeds[0]), law, horizon)
    assert len(led.taus) - 1 == int((advances[0, led.sigma:] == 1).sum())


def test_left_containment_certified_sweep():
    total = 0
    for seed in range(5000, 5030):
        out = verify_left_containment(seed, BOUNDED_MIN1, 256)
        assert out["certified"]
        total += out["left_vertices_checked"]
    assert total > 1000


def test_left_containment_uncertified_path():
    out = verify_left_containment(77, GeometricMin1(0.5), 128)
    assert out["certified"] is False
    assert out["left_vertices_checked"] > 0


def test_left_containment_rejects_mass_at_zero():
    with pytest.raises(ValueError, match="no mass at"):
        verify_left_containment(1, FiniteSupport([0.5, 0.0, 0.5]), 64)
    with pytest.raises(ValueError, match="no mass at"):
        verify_left_containment(1, Geometric(0.5), 64)
