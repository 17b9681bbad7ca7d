"""Monte Carlo estimators over many replicates.

Every operation here couples to the engine through keyed randomness: the
replicate with index i always consumes the stream derived from
(master seed, i), so results are independent of batching and worker count,
and any single replicate can be replayed through the one-run engine for
debugging. Binomial uncertainty is reported with Wilson intervals; tail
decay rates come from weighted least squares on the log survival curve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from .batch import batch_front_positions, batch_taus
from .engine import AllOccupied
from .laws import ExactBounded, RadiusLaw, TailBudget, overshoot_cdf, overshoot_query
from .renewal import gather_increments_pool, speed_from_renewals
from .reports import CltReport, EstimateReport
from .rng import derive_seed, derive_seed_array

__all__ = [
    "wilson_interval",
    "dkw_epsilon",
    "wls_log_fit",
    "LogLinearFit",
    "SurvivalTailResult",
    "survival_tail",
    "HazardCheckResult",
    "hazard_check",
    "percolation_prob",
    "ClusterMomentsResult",
    "cluster_moments",
    "speed_lln",
    "clt_check",
    "ks_critical_value",
    "psi_squared_from_increments",
]


# ======================================================================
# distribution-free helpers
# ======================================================================


def wilson_interval(k, n: int, level: float = 0.95):
    """Wilson score interval for a binomial proportion; k may be an array.

    Always brackets k/n, never leaves [0, 1], and keeps close-to-nominal
    coverage even at the extremes where the Wald interval collapses.
    """
    z = float(sps.norm.ppf(0.5 + level / 2.0))
    k_arr = np.asarray(k, dtype=np.float64)
    p = k_arr / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = np.maximum(0.0, center - half)
    hi = np.minimum(1.0, center + half)
    # analytically lo(0) = 0 and hi(n) = 1; keep them exact despite rounding
    lo = np.where(k_arr == 0, 0.0, lo)
    hi = np.where(k_arr == n, 1.0, hi)
    if np.ndim(k) == 0:
        return float(lo), float(hi)
    return lo, hi


def dkw_epsilon(n: int, level: float = 0.95) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band: the whole empirical
    CDF stays within eps of the truth with the given probability."""
    alpha = 1.0 - level
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


@dataclass(frozen=True)
class LogLinearFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    dropped: int  # grid points excluded because p_hat was 0 or 1

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "dropped": self.dropped,
        }


def wls_log_fit(x, p_hat, n_reps: int) -> LogLinearFit:
    """Weighted least squares of log p_hat against x.

    The delta method gives Var(log p_hat) ~ (1 - p) / (N p), so weights are
    N p / (1 - p). Grid points with p_hat in {0, 1} carry no usable log value
    and are dropped (and counted)."""
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p_hat, dtype=np.float64)
    keep = (p > 0.0) & (p < 1.0)
    dropped = int((~keep).sum())
    x, p = x[keep], p[keep]
    if x.size < 2:
        return LogLinearFit(math.nan, math.nan, math.nan, int(x.size), dropped)
    y = np.log(p)
    w = n_reps * p / (1.0 - p)
    wsum = w.sum()
    xbar = float((w * x).sum() / wsum)
    ybar = float((w * y).sum() / wsum)
    sxx = float((w * (x - xbar) ** 2).sum())
    sxy = float((w * (x - xbar) * (y - ybar)).sum())
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = y - (slope * x + intercept)
    ss_res = float((w * resid**2).sum())
    ss_tot = float((w * (y - ybar) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LogLinearFit(slope, intercept, r2, int(x.size), dropped)


# ======================================================================
# extinction-time tail
# ======================================================================


@dataclass(frozen=True)
class SurvivalTailResult:
    """P(tau > n) over a grid of n with Wilson intervals, plus the weighted
    log-linear fit whose negated slope estimates the decay rate."""

    ns: tuple
    p_hat: tuple
    ci_low: tuple
    ci_high: tuple
    replicates: int
    level: float
    fit: LogLinearFit

    @property
    def decay_rate(self) -> float:
        """The estimated constant in P(tau > n) ~ exp(-rate * n)."""
        return -self.fit.slope

    def to_json_dict(self) -> dict:
        return {
            "ns": list(self.ns),
            "p_hat": list(self.p_hat),
            "ci_low": list(self.ci_low),
            "ci_high": list(self.ci_high),
            "replicates": self.replicates,
            "level": self.level,
            "fit": self.fit.to_json_dict(),
            "decay_rate": self.decay_rate,
        }


def survival_tail(law: RadiusLaw, ns, replicates: int, *, env=AllOccupied(),
                  seed: int = 0, level: float = 0.95) -> SurvivalTailResult:
    """Estimate the extinction-time survival curve P(tau > n) on a grid."""
    ns = sorted(int(n) for n in ns)
    if not ns or ns[0] < 0:
        raise ValueError("survival grid must be nonempty and nonnegative")
    seeds = derive_seed_array(seed, "survival", np.arange(replicates))
    res = batch_taus(seeds, law, env, horizon=max(ns))
    tau = np.where(res.tau < 0, np.iinfo(np.int64).max, res.tau)
    counts = np.array([(tau > n).sum() for n in ns])
    lo, hi = wilson_interval(counts, replicates, level)
    p = counts / replicates
    fit = wls_log_fit(ns, p, replicates)
    return SurvivalTailResult(
        ns=tuple(ns),
        p_hat=tuple(p.tolist()),
        ci_low=tuple(np.atleast_1d(lo).tolist()),
        ci_high=tuple(np.atleast_1d(hi).tolist()),
        replicates=replicates,
        level=level,
        fit=fit,
    )


# ======================================================================
# hazard floor
# ======================================================================


def _overshoot_zero_mass(law: RadiusLaw) -> float:
    policy = ExactBounded() if law.support_bound is not None else TailBudget(1e-12)
    return float(overshoot_cdf(overshoot_query(law, policy), 0))


@dataclass(frozen=True)
class HazardRow:
    n: int
    alive: int
    died_next: int
    h_hat: Optional[float]
    halfwidth: Optional[float]
    ok: Optional[bool]
    note: Optional[str] = None


@dataclass(frozen=True)
class HazardCheckResult:
    """Empirical one-step extinction hazard compared against its theoretical
    floor: both frontier blocks going extinct in one step costs at least the
    squared probability of zero overshoot."""

    bound: float
    p_overshoot_zero: float
    rows: tuple
    replicates: int
    level: float

    @property
    def all_ok(self) -> bool:
        checked = [r.ok for r in self.rows if r.ok is not None]
        return bool(checked) and all(checked)

    def to_json_dict(self) -> dict:
        return {
            "bound": self.bound,
            "p_overshoot_zero": self.p_overshoot_zero,
            "replicates": self.replicates,
            "level": self.level,
            "rows": [vars(r) for r in self.rows],
            "all_ok": self.all_ok,
        }


def hazard_check(law: RadiusLaw, nmax: int, replicates: int, *, env=AllOccupied(),
                 seed: int = 0, level: float = 0.95,
                 min_alive: int = 25) -> HazardCheckResult:
    """Check h(n) = P(tau = n+1 | tau > n) >= P(O = 0)^2 for n = 0..nmax.

    Rows with fewer than min_alive survivors are skipped with a note; the
    others pass when h_hat >= bound - 3 * sigma with sigma the binomial
    standard error sqrt(h (1 - h) / alive). A row with zero deaths has
    sigma = 0 and fails any positive floor — conservative, and not a case
    that arises at the sample sizes the floor is meant for. The Wilson
    halfwidth at `level` is reported alongside for interval readers."""
    p0 = _overshoot_zero_mass(law)
    bound = p0 * p0
    seeds = derive_seed_array(seed, "hazard", np.arange(replicates))
    res = batch_taus(seeds, law, env, horizon=nmax + 1)
    tau = np.where(res.tau < 0, np.iinfo(np.int64).max, res.tau)
    rows = []
    for n in range(nmax + 1):
        alive = int((tau > n).sum())
        died = int((tau == n + 1).sum())
        if alive < min_alive:
            rows.append(HazardRow(n, alive, died, None, None, None,
                                  note=f"fewer than {min_alive} survivors"))
            continue
        h = died / alive
        sigma = math.sqrt(h * (1.0 - h) / alive)
        lo, hi = wilson_interval(died, alive, level)
        hw = (hi - lo) / 2.0
        rows.append(HazardRow(n, alive, died, h, hw, bool(h >= bound - 3.0 * sigma)))
    return HazardCheckResult(bound, p0, tuple(rows), replicates, level)


# ======================================================================
# survival probability and cluster size
# ======================================================================


def percolation_prob(law: RadiusLaw, horizon: int, replicates: int, *,
                     env=AllOccupied(), seed: int = 0,
                     level: float = 0.95) -> EstimateReport:
    """Fraction of replicates still alive at the horizon; an upper bound in
    expectation on the true survival probability (a path alive at the horizon
    may still die later)."""
    seeds = derive_seed_array(seed, "percolation", np.arange(replicates))
    res = batch_taus(seeds, law, env, horizon=horizon)
    alive = int(res.censored.sum())
    lo, hi = wilson_interval(alive, replicates, level)
    return EstimateReport(
        quantity="survival probability",
        point=alive / replicates,
        ci_low=lo,
        ci_high=hi,
        level=level,
        replicates=replicates,
        censored=alive,
        method="alive-at-horizon fraction, Wilson interval; biased upward",
        extra={"horizon": horizon},
    )


@dataclass(frozen=True)
class ClusterMomentsResult:
    """Moments of the total spread M of extinct runs, with a log-linear fit
    of its survival tail."""

    mean: float
    mean_ci: tuple
    variance: float
    variance_ci: tuple
    replicates: int
    censored: int
    censored_flag: bool
    level: float
    tail_fit: LogLinearFit

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "mean_ci": list(self.mean_ci),
            "variance": self.variance,
            "variance_ci": list(self.variance_ci),
            "replicates": self.replicates,
            "censored": self.censored,
            "censored_flag": self.censored_flag,
            "level": self.level,
            "tail_fit": self.tail_fit.to_json_dict(),
        }


def cluster_moments(law: RadiusLaw, replicates: int, *, cap: int = 2048,
                    env=AllOccupied(), seed: int = 0,
                    level: float = 0.95) -> ClusterMomentsResult:
    """Mean and variance of the spread M = r_tau - l_tau + 1, from replicates
    run until extinction or the step cap. Runs hitting the cap are censored;
    more than 1% of them flags the result as cap-limited."""
    seeds = derive_seed_array(seed, "cluster", np.arange(replicates))
    res = batch_taus(seeds, law, env, horizon=cap)
    censored = int(res.censored.sum())
    flag = censored > 0.01 * replicates
    if flag:
        warnings.warn(
            f"{censored}/{replicates} replicates hit the {cap}-step cap; "
            "cluster moments are biased low", stacklevel=2,
        )
    m = res.cluster[~res.censored].astype(np.float64)
    if m.size < 2:
        raise ValueError("not enough extinct replicates to estimate moments")
    z = float(sps.norm.ppf(0.5 + level / 2.0))
    mean = float(m.mean())
    se_mean = float(m.std(ddof=1)) / math.sqrt(m.size)
    var = float(m.var(ddof=1))
    m4 = float(((m - mean) ** 4).mean())
    se_var = math.sqrt(max(m4 - var * var, 0.0) / m.size)
    # survival tail of M on integer levels with at least 10 exceedances
    levels = np.arange(1, int(m.max()) + 1)
    exceed = np.array([(m > s).sum() for s in levels])
    keep = exceed >= 10
    fit = wls_log_fit(levels[keep], exceed[keep] / m.size, m.size)
    return ClusterMomentsResult(
        mean=mean,
        mean_ci=(mean - z * se_mean, mean + z * se_mean),
        variance=var,
        variance_ci=(max(0.0, var - z * se_var), var + z * se_var),
        replicates=replicates,
        censored=censored,
        censored_flag=flag,
        level=level,
        tail_fit=fit,
    )


# ======================================================================
# speed
# ======================================================================


def speed_lln(law: RadiusLaw, n_steps: int, *, replicates: int = 32,
              env=AllOccupied(), p2: float = 0.0, seed: int = 0,
              window: Optional[int] = None, level: float = 0.95) -> EstimateReport:
    """Path-average speed r_N / N, with a t interval ACROSS replicates.

    Within-path errors are strongly autocorrelated, so the interval comes
    from the spread of independent paths, never from one path's steps. With
    p2 > 0 the fronts evolve under the reactivation chain instead (window
    is that kernel's truncation width, only needed for unbounded laws)."""
    if replicates < 2:
        raise ValueError("need at least two replicates for a spread-based CI")
    seeds = derive_seed_array(seed, "lln-path", np.arange(replicates))
    if p2 > 0.0:
        from .reactivation import react_front_positions

        if not isinstance(env, AllOccupied):
            raise ValueError("reactivation runs on the fully occupied lattice")
        rs = react_front_positions(seeds, law, n_steps, p2=p2, window=window)["r"]
        died = 0
    else:
        out = batch_front_positions(seeds, law, n_steps, env_spec=env)
        rs = out["r"]
        died = int((out["tau"] >= 0).sum())
    if died:
        warnings.warn(
            f"{died}/{replicates} paths went extinct before step {n_steps}; "
            "their frozen fronts drag the speed estimate down", stacklevel=2,
        )
    mus = rs.astype(np.float64) / n_steps
    point = float(mus.mean())
    se = float(mus.std(ddof=1)) / math.sqrt(replicates)
    t = float(sps.t.ppf(0.5 + level / 2.0, df=replicates - 1))
    return EstimateReport(
        quantity="front speed",
        point=point,
        ci_low=point - t * se,
        ci_high=point + t * se,
        level=level,
        replicates=replicates,
        censored=died,
        method="path average r_N / N, t interval across replicates",
        extra={"n_steps": n_steps, "p2": p2},
    )


# ======================================================================
# central-limit check
# ======================================================================

# asymptotic Lilliefors critical values (normal family, estimated scale)
_LILLIEFORS = {0.10: 0.819, 0.05: 0.886, 0.01: 1.031}


def ks_critical_value(m: int, alpha: float = 0.01, lilliefors: bool = False) -> float:
    """Critical value for the one-sample KS distance at level alpha.

    The standard value sqrt(-ln(alpha/2)/2)/sqrt(m) is conservative here
    because the scale is estimated from the same sample; the Lilliefors
    variant corrects for that at the tabulated levels."""
    if lilliefors:
        try:
            return _LILLIEFORS[alpha] / math.sqrt(m)
        except KeyError:
            raise ValueError(
                f"Lilliefors table covers alpha in {sorted(_LILLIEFORS)}, got {alpha}"
            ) from None
    return math.sqrt(-math.log(alpha / 2.0) / 2.0) / math.sqrt(m)


def psi_squared_from_increments(d_tau, d_r) -> float:
    """Fluctuation scale predicted by the regeneration picture:
    Var(d_r - mu d_tau) / E(d_tau). A cross-check for clt_check's psi_hat,
    not a substitute (the paths also carry pre-sigma transients)."""
    d_tau = np.asarray(d_tau, dtype=np.float64)
    d_r = np.asarray(d_r, dtype=np.float64)
    mu = d_r.mean() / d_tau.mean()
    resid = d_r - mu * d_tau
    return float(resid.var(ddof=1) / d_tau.mean())


def clt_check(law: RadiusLaw, n: int, m_replicates: int, *,
              mu_source: str = "renewal", mu_value: Optional[float] = None,
              mu_pairs: int = 1_000_000, seed: int = 0, alpha: float = 0.01,
              lilliefors: bool = False) -> CltReport:
    """Gaussian check on the centered, sqrt(n)-scaled right front.

    Draws m independent paths, forms z_i = (r_n - n mu_hat) / sqrt(n), and
    compares their distribution against Normal(0, psi_hat^2) by a one-sample
    KS test. The centering mu_hat comes from regeneration increments on a
    separate stream ("renewal", default), from an independent path average
    ("lln"), or is supplied ("fixed"). Requires no mass at radius zero and
    more than four finite moments, otherwise the Gaussian limit is not on
    the table.

    Centering error in mu_hat enters every z_i scaled by sqrt(n), so the
    renewal pool must be much larger than the path count: the mean-z bias
    is about sqrt(n / (E(d_tau) * mu_pairs)). The default pool keeps it
    near 0.03 for n = 2000; shrink mu_pairs only for quick smoke runs.
    """
    if law.p1 != 0.0:
        raise ValueError(
            f"clt_check needs P(I = 0) = 0, but {law.label()} has mass {law.p1:g} at zero"
        )
    if not law.moment_order_finite > 4.0:
        raise ValueError(
            f"clt_check needs finite moments past order 4; {law.label()} "
            f"has them only below {law.moment_order_finite:g}"
        )
    if mu_source == "renewal":
        d_tau, d_r, _ = gather_increments_pool(derive_seed(seed, "clt-mu"), law, mu_pairs)
        mu = speed_from_renewals((d_tau, d_r)).point
    elif mu_source == "lln":
        mu = speed_lln(law, n_steps=max(n, 256), seed=derive_seed(seed, "clt-mu")).point
    elif mu_source == "fixed":
        if mu_value is None:
            raise ValueError("mu_source='fixed' requires mu_value")
        mu = float(mu_value)
    else:
        raise ValueError(f"unknown mu_source {mu_source!r}")

    seeds = derive_seed_array(seed, "clt-path", np.arange(m_replicates))
    rs = batch_front_positions(seeds, law, n)["r"].astype(np.float64)
    z = (rs - n * mu) / math.sqrt(n)
    if bool(np.all(z == z[0])):
        # degenerate motion (constant radii): the limit is a point mass, and
        # the sample sd would be rounding noise rather than a scale
        psi = 0.0
        distance = 0.0 if z[0] == 0.0 else 1.0
    else:
        psi = float(z.std(ddof=1))
        distance = float(sps.kstest(z, "norm", args=(0.0, psi)).statistic)
    return CltReport(
        n=n,
        m_replicates=m_replicates,
        mu_hat=mu,
        psi_hat=psi,
        ks_distance=distance,
        ks_critical=ks_critical_value(m_replicates, alpha, lilliefors),
        mean_z=float(z.mean()),
        mu_source=mu_source,
    )
