"""Regeneration structure of the right front.

For laws with no mass at radius zero the right front advances every step, and
steps where it advances by exactly one are regeneration points: everything to
the right of the new frontier is untouched, so the future evolves like a
fresh one-sided process. The left half can interfere only through vertices
-j whose radius exceeds j; sigma is one past the deepest such violator, and
after sigma the left half never reaches the right front again.

Speed estimation averages the i.i.d. (d_tau, d_r) increments between
regeneration times; the leg from sigma to the first regeneration has a
different law and is excluded.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import stats as sps

from .engine import AllOccupied, Horizon, Trajectory, init, radius_field, run, step
from .laws import ExactBounded, HeavyTailError, RadiusLaw, TailBudget
from .reports import EstimateReport
from .rng import CH_RADIUS, derive_seed, derive_seed_array, keyed_uniform_array

__all__ = [
    "NoRenewalsFound",
    "RenewalLedger",
    "detect_sigma",
    "detect_taus",
    "build_ledger",
    "gather_increments",
    "gather_increments_fast",
    "gather_increments_pool",
    "renewal_speed_estimate",
    "speed_from_renewals",
    "iid_diagnostics",
    "one_sided_renewal_sample",
    "one_sided_renewal_samples",
    "verify_left_containment",
]


class NoRenewalsFound(ValueError):
    """The ledger carries no usable regeneration increments."""


# ======================================================================
# sigma: when the left half stops mattering
# ======================================================================


def _warn_mass_at_zero(law: RadiusLaw, what: str) -> None:
    if law.p1 != 0.0:
        import warnings

        warnings.warn(
            f"{what} assumes P(I = 0) = 0; {law.label()} has mass {law.p1:g} at "
            "zero, so the left frontier can stall and regeneration theory does "
            "not apply",
            stacklevel=3,
        )


def static_field(seed: int, law: RadiusLaw):
    """Radius field accessor v -> I_v matching what engine runs under this
    seed will draw."""
    return lambda v: radius_field(seed, law, v)


def _scan_depth(law: RadiusLaw, policy: Union[ExactBounded, TailBudget]) -> tuple:
    """Deepest vertex the violator scan must examine, and whether that depth
    is exhaustive (bounded support) or merely budgeted (tail sum <= eps)."""
    kmax = law.support_bound
    if isinstance(policy, ExactBounded):
        if kmax is None:
            raise ValueError("ExactBounded requires a law with bounded support")
        return max(kmax - 1, 0), True
    if isinstance(policy, TailBudget):
        if law.moment_order_finite <= 1.0:
            raise HeavyTailError(
                f"cannot budget the violator tail for {law.label()}: the tail sum diverges"
            )
        if kmax is not None:
            return max(kmax - 1, 0), True
        depth = 1
        while law.tail_sum_beyond(depth) > policy.eps:
            depth *= 2
            if depth > 2**40:
                raise HeavyTailError(
                    f"cannot meet tail budget {policy.eps:g} for {law.label()}"
                )
        lo = depth // 2
        while lo < depth:
            mid = (lo + depth) // 2
            if law.tail_sum_beyond(mid) <= policy.eps:
                depth = mid
            else:
                lo = mid + 1
        return depth, False
    raise TypeError(f"unknown depth policy {policy!r}")


def detect_sigma(field, law: RadiusLaw, policy: Union[ExactBounded, TailBudget]) -> tuple:
    """(sigma, certified): the smallest n >= 1 such that no vertex -j with
    j >= n violates I_{-j} <= j; equivalently 1 + the deepest violator.

    `field` maps a vertex to its radius and must be the same field the
    engine run consults. A bounded law can only have violators at depths
    j < K, so the search is exhaustive and certified. Under a tail budget
    the probability that any unexamined depth violates is at most
    sum_{j>D} P(I > j) <= eps, and the result is reported uncertified.
    """
    depth, certified = _scan_depth(law, policy)
    worst = 0
    for j in range(1, depth + 1):
        if field(-j) > j:
            worst = j
    return worst + 1, certified


# ======================================================================
# ledger
# ======================================================================


@dataclass
class RenewalLedger:
    """Regeneration times tau_j and front positions r_{tau_j}; entry 0 is
    (sigma, r_sigma). Increments pair consecutive regenerations from tau_1
    on, so the sigma -> tau_1 leg never enters the averages."""

    sigma: int
    sigma_certified: bool
    taus: list  # [(tau_j, r_tau_j)], j = 0, 1, ...
    truncated: bool = False
    truncation_reason: Optional[str] = None

    def increments(self) -> tuple:
        """(d_tau, d_r) int64 arrays over legs tau_j -> tau_{j+1}, j >= 1."""
        if len(self.taus) < 3:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        ts = np.asarray([t for t, _ in self.taus[1:]], dtype=np.int64)
        rs = np.asarray([r for _, r in self.taus[1:]], dtype=np.int64)
        return np.diff(ts), np.diff(rs)

    @property
    def n_increments(self) -> int:
        return max(len(self.taus) - 2, 0)

    def to_csv(self, fh=None) -> str:
        buf = fh if fh is not None else io.StringIO()
        buf.write("j,tau_j,r_tau_j,d_tau,d_r\n")
        prev: Optional[tuple] = None
        for j, (t, r) in enumerate(self.taus):
            if j == 0:
                buf.write(f"0,{t},{r},,\n")
            else:
                buf.write(f"{j},{t},{r},{t - prev[0]},{r - prev[1]}\n")
            prev = (t, r)
        return buf.getvalue() if fh is None else ""


def detect_taus(traj: Trajectory, sigma: int, sigma_certified: bool) -> RenewalLedger:
    """Scan a trajectory for regenerations: steps n > sigma where the right
    front moved by exactly one."""
    rs = traj.rs
    if sigma >= len(rs):
        return RenewalLedger(
            sigma, sigma_certified, [], truncated=True,
            truncation_reason="trajectory ends before sigma",
        )
    taus = [(sigma, int(rs[sigma]))]
    for n in range(sigma + 1, len(rs)):
        if rs[n] - rs[n - 1] == 1:
            taus.append((n, int(rs[n])))
    truncated = traj.extinct
    reason = "extinct before horizon" if traj.extinct else None
    return RenewalLedger(sigma, sigma_certified, taus, truncated, reason)


def build_ledger(seed: int, law: RadiusLaw, horizon: int,
                 policy: Union[ExactBounded, TailBudget, None] = None) -> RenewalLedger:
    """Run the two-sided process to a horizon and extract its ledger."""
    _warn_mass_at_zero(law, "regeneration detection")
    if policy is None:
        policy = ExactBounded() if law.support_bound is not None else TailBudget(1e-9)
    sigma, certified = detect_sigma(static_field(seed, law), law, policy)
    traj = run(seed, law, AllOccupied(), Horizon(horizon))
    return detect_taus(traj, sigma, certified)


def gather_increments(master_seed: int, law: RadiusLaw, n_pairs: int,
                      horizon: int = 4096,
                      policy: Union[ExactBounded, TailBudget, None] = None) -> tuple:
    """Pool ledger increments across replicates until n_pairs are collected.

    Returns (d_tau, d_r, info) with info carrying run count and whether every
    sigma involved was certified."""
    d_taus: list = []
    d_rs: list = []
    runs = 0
    certified = True
    while sum(len(x) for x in d_taus) < n_pairs:
        seed = derive_seed(master_seed, "renewal-run", runs)
        ledger = build_ledger(seed, law, horizon, policy)
        certified = certified and ledger.sigma_certified
        dt, dr = ledger.increments()
        if dt.size:
            d_taus.append(dt)
            d_rs.append(dr)
        runs += 1
        if runs > 100 * max(1, n_pairs):
            raise NoRenewalsFound(
                f"collected {sum(len(x) for x in d_taus)} increments "
                f"in {runs} runs; target {n_pairs} looks unreachable"
            )
    d_tau = np.concatenate(d_taus)[:n_pairs]
    d_r = np.concatenate(d_rs)[:n_pairs]
    return d_tau, d_r, {"runs": runs, "sigma_certified": certified}


def gather_increments_fast(master_seed: int, law: RadiusLaw, n_lanes: int,
                           horizon: int = 4096,
                           policy: Union[ExactBounded, TailBudget, None] = None,
                           lane_offset: int = 0) -> tuple:
    """Pool ledger increments across n_lanes replicates in one vectorized
    pass. Lane i consumes the same derived seed as run lane_offset + i of
    gather_increments and contributes exactly the increments build_ledger
    would report for that seed; only the stopping rule differs (every lane
    is consumed in full, nothing is truncated to a target count).

    Exists because CLT centering wants ~1e6 increments; the per-replicate
    path takes minutes at that size, this takes seconds.
    """
    from .batch import batch_front_positions

    if n_lanes < 1:
        raise ValueError(f"n_lanes must be positive, got {n_lanes}")
    _warn_mass_at_zero(law, "regeneration detection")
    if policy is None:
        policy = ExactBounded() if law.support_bound is not None else TailBudget(1e-9)
    depth, certified = _scan_depth(law, policy)
    lanes = np.arange(lane_offset, lane_offset + n_lanes, dtype=np.int64)
    seeds = derive_seed_array(master_seed, "renewal-run", lanes)

    sigma = np.ones(n_lanes, dtype=np.int64)
    if depth >= 1:
        js = np.arange(1, depth + 1, dtype=np.int64)
        radii = law.quantile_array(
            keyed_uniform_array(seeds[:, None], CH_RADIUS, -js[None, :])
        )
        violating = radii > js[None, :]
        deepest = depth - np.argmax(violating[:, ::-1], axis=1)
        sigma = np.where(violating.any(axis=1), deepest, 0).astype(np.int64) + 1

    hist = batch_front_positions(seeds, law, horizon, history=True)["r_history"]
    unit = np.diff(hist, axis=1) == 1      # [i, n-1] <=> unit advance at step n
    lane, nm1 = np.nonzero(unit)           # row-major: grouped by lane, steps ascending
    n = nm1 + 1
    keep = n > sigma[lane]
    lane, n = lane[keep], n[keep]
    r_at = hist[lane, n]
    same_lane = lane[1:] == lane[:-1]
    d_tau = (n[1:] - n[:-1])[same_lane].astype(np.int64)
    d_r = (r_at[1:] - r_at[:-1])[same_lane].astype(np.int64)
    return d_tau, d_r, {"runs": n_lanes, "sigma_certified": certified}


def gather_increments_pool(master_seed: int, law: RadiusLaw, n_pairs: int,
                           horizon: int = 2048,
                           policy: Union[ExactBounded, TailBudget, None] = None) -> tuple:
    """gather_increments' contract (pool truncated to exactly n_pairs) at
    batch speed. Lanes are consumed in doubling blocks; since the truncated
    pool is a prefix of the lane-ordered increment stream, the result does
    not depend on the block schedule."""
    d_taus: list = []
    d_rs: list = []
    total = 0
    offset = 0
    block = 256
    certified = True
    while total < n_pairs:
        dt, dr, info = gather_increments_fast(
            master_seed, law, block, horizon, policy, lane_offset=offset)
        certified = certified and info["sigma_certified"]
        if dt.size:
            d_taus.append(dt)
            d_rs.append(dr)
            total += dt.size
        offset += block
        block = min(2 * block, 1 << 16)
        if total == 0 and offset >= 4096:
            raise NoRenewalsFound(
                f"no increments in {offset} lanes of {horizon} steps"
            )
        if offset > 1 << 22:
            raise NoRenewalsFound(
                f"collected {total} increments in {offset} lanes; "
                f"target {n_pairs} looks unreachable"
            )
    d_tau = np.concatenate(d_taus)[:n_pairs]
    d_r = np.concatenate(d_rs)[:n_pairs]
    return d_tau, d_r, {"runs": offset, "sigma_certified": certified}


# ======================================================================
# speed and diagnostics
# ======================================================================


def renewal_speed_estimate(law: RadiusLaw, master_seed: int,
                           n_pairs: int = 20_000, horizon: int = 2048,
                           policy: Union[ExactBounded, TailBudget, None] = None,
                           level: float = 0.95) -> EstimateReport:
    """Regeneration-based speed with the point-mass laws handled exactly.

    A radius fixed at k >= 2 advances the front by k every step but never by
    exactly one, so the unit-advance scan finds nothing; there the step
    itself regenerates (the environment ahead is always fresh) and the speed
    is k with no uncertainty. Every other law goes through the pooled
    increment estimate."""
    k = law.support_bound
    if k is not None and (k == 0 or law.cdf(k - 1) == 0.0):
        speed = float(k)
        return EstimateReport(
            quantity="front speed",
            point=speed,
            ci_low=speed,
            ci_high=speed,
            level=level,
            replicates=0,
            censored=0,
            method="degenerate regeneration: point-mass radius, exact",
            extra={"support": k, "sigma_certified": True},
        )
    pool = gather_increments_pool(master_seed, law, n_pairs, horizon, policy)
    return speed_from_renewals(pool, level=level)


def speed_from_renewals(ledger_or_increments, level: float = 0.95) -> EstimateReport:
    """Speed = E(d_r) / E(d_tau) with a delta-method interval for the ratio
    of means. Accepts a RenewalLedger, a pooled (d_tau, d_r) pair, or the
    (d_tau, d_r, info) triple the gatherers return."""
    extra = {}
    if isinstance(ledger_or_increments, RenewalLedger):
        d_tau, d_r = ledger_or_increments.increments()
        extra["sigma_certified"] = ledger_or_increments.sigma_certified
    else:
        d_tau, d_r = ledger_or_increments[:2]
        d_tau = np.asarray(d_tau)
        d_r = np.asarray(d_r)
        if len(ledger_or_increments) > 2:
            extra["sigma_certified"] = ledger_or_increments[2].get("sigma_certified")
    n = d_tau.size
    if n == 0:
        raise NoRenewalsFound("no regeneration increments to average")
    mean_t = float(d_tau.mean())
    mean_r = float(d_r.mean())
    mu = mean_r / mean_t
    if n == 1:
        se = math.inf
    else:
        resid = d_r - mu * d_tau
        se = float(np.std(resid, ddof=1)) / (mean_t * math.sqrt(n))
    z = float(sps.norm.ppf(0.5 + level / 2.0))
    lo, hi = mu - z * se, mu + z * se
    if n == 1:
        lo, hi = -math.inf, math.inf
    extra.update({"mean_d_tau": mean_t, "mean_d_r": mean_r})
    return EstimateReport(
        quantity="front speed",
        point=mu,
        ci_low=lo,
        ci_high=hi,
        level=level,
        replicates=n,
        censored=0,
        method="regeneration increments, delta-method ratio CI",
        extra=extra,
    )


def _lag_autocorr(x: np.ndarray, lag: int) -> float:
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n <= lag + 1:
        return math.nan
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        return 0.0
    return float(np.dot(xc[:-lag], xc[lag:]) / denom)


def _permutation_pvalue(x: np.ndarray, lag: int, rng: np.random.Generator,
                        n_perm: int = 999) -> float:
    """P(|lag autocorr| >= observed) under random reshuffling."""
    obs = abs(_lag_autocorr(x, lag))
    if math.isnan(obs):
        return math.nan
    hits = 0
    for _ in range(n_perm):
        if abs(_lag_autocorr(rng.permutation(x), lag)) >= obs:
            hits += 1
    return (1 + hits) / (n_perm + 1)


def iid_diagnostics(d_tau: np.ndarray, d_r: np.ndarray, seed: int = 0,
                    n_perm: int = 999, min_increments: int = 100) -> dict:
    """Independence and stationarity checks on the increment sequence:
    lag-1/2 autocorrelations (raw and the speed residual), a permutation
    p-value for the lag-1 autocorrelation, and first-half vs second-half
    two-sample KS p-values."""
    d_tau = np.asarray(d_tau, dtype=np.float64)
    d_r = np.asarray(d_r, dtype=np.float64)
    n = d_tau.size
    if n < min_increments:
        raise NoRenewalsFound(f"need at least {min_increments} increments, have {n}")
    mu = d_r.mean() / d_tau.mean()
    resid = d_r - mu * d_tau
    rng = np.random.default_rng(derive_seed(seed, "iid-perm"))
    half = n // 2
    out = {"n": int(n), "mu_hat": float(mu)}
    for name, x in (("d_tau", d_tau), ("d_r", d_r), ("residual", resid)):
        out[f"acf1_{name}"] = _lag_autocorr(x, 1)
        out[f"acf2_{name}"] = _lag_autocorr(x, 2)
        out[f"perm_p_{name}"] = _permutation_pvalue(x, 1, rng, n_perm)
    for name, x in (("d_tau", d_tau), ("d_r", d_r)):
        res = sps.ks_2samp(x[:half], x[half:], method="asymp")
        out[f"ks_halves_p_{name}"] = float(res.pvalue)
    return out


# ======================================================================
# one-sided comparison and containment
# ======================================================================


def one_sided_renewal_sample(seed: int, law: RadiusLaw, step_cap: int = 10**4) -> Optional[tuple]:
    """(gamma, r_gamma) for a fresh one-sided run: gamma is the first step
    whose advance is exactly one. None if the run dies or exceeds the cap
    without a unit advance."""
    state, env = init(seed, AllOccupied())
    while state.n < step_cap:
        prev_r = state.r
        state = step(state, law, env, seed, one_sided=True)
        if state.extinct:
            return None
        if state.r - prev_r == 1:
            return state.n, int(state.r)
    return None


def one_sided_renewal_samples(master_seed: int, law: RadiusLaw, n: int,
                              step_cap: int = 10**4) -> tuple:
    """n independent (gamma, r_gamma) pairs; censored draws are dropped and
    counted. Returns (gammas, r_gammas, censored)."""
    gs, rs = [], []
    censored = 0
    i = 0
    while len(gs) < n:
        got = one_sided_renewal_sample(derive_seed(master_seed, "one-sided", i), law, step_cap)
        if got is None:
            censored += 1
        else:
            gs.append(got[0])
            rs.append(got[1])
        i += 1
        if censored > 100 + n:
            raise NoRenewalsFound("one-sided unit advances are too rare to sample")
    return np.asarray(gs, dtype=np.int64), np.asarray(rs, dtype=np.int64), censored


def verify_left_containment(seed: int, law: RadiusLaw, horizon: int,
                            policy: Union[ExactBounded, TailBudget, None] = None) -> dict:
    """Pathwise check of what sigma certifies: for every n > sigma, no
    left-block vertex active at step n reaches past the origin, i.e.
    max(v + I_v) <= 0 over the left block. Requires P(I = 0) = 0; with mass
    at zero a shallow vertex can activate late and the property is false.

    Returns a summary dict; raises AssertionError on violation of a
    certified run."""
    if law.p1 != 0.0:
        raise ValueError(
            "left containment after sigma holds only for laws with no mass at "
            "radius zero; with a stalling left frontier a shallow vertex can "
            "activate after sigma and still reach past the origin"
        )
    if policy is None:
        policy = ExactBounded() if law.support_bound is not None else TailBudget(1e-9)
    sigma, certified = detect_sigma(static_field(seed, law), law, policy)
    traj = run(seed, law, AllOccupied(), Horizon(horizon))
    checked = 0
    for n in range(sigma + 1, len(traj.ns)):
        l_now = traj.ls[n]
        l_prev = traj.ls[n - 1]
        for v in range(l_now, l_prev):
            reach = v + radius_field(seed, law, v)
            checked += 1
            if reach > 0 and certified:
                raise AssertionError(
                    f"left containment violated at step {n}: vertex {v} reaches "
                    f"{reach} past the origin (sigma={sigma})"
                )
    return {"sigma": sigma, "certified": certified, "left_vertices_checked": checked}
