"""Spread with reactivation clocks.

Every informed vertex flips an independent Bernoulli(p2) clock each step;
when it fires the vertex spreads again with a fresh radius, so an empty
active set is never terminal. All randomness is a pure function of
(seed, step, vertex, channel): co-evolving processes consult identical
values wherever they overlap, which is what makes the domination probes
and couplings below well-defined — coupling is by key, never by draw order.

For laws with bounded support K the fronts are exactly computable from a
width-K window per side: a vertex more than K below the right front can
never push it, and active sets carry no memory (each step's active set is
rebuilt from fresh clocks plus newly heard vertices). The windowed kernels
exploit that; they are bit-exact against the set-based engine, not an
approximation. For unbounded laws an explicit window must be requested and
the result carries a truncation error budget.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import Trajectory
from .laws import RadiusLaw
from .rng import CH_CLOCK, CH_STEP_RADIUS, keyed_uniform, keyed_uniform_array

__all__ = [
    "ReactState",
    "step_react",
    "run_react",
    "run_one_sided_react",
    "coupled_basic_run",
    "drift_theta",
    "front_anchored_walk",
    "self_anchored_walk",
    "DominationProbe",
    "probe_domination",
    "batch_probe_domination",
    "react_front_positions",
    "ReactRenewalLedger",
    "detect_renewals_react",
    "check_standing_assumptions",
]

_FLOOR_NONE = np.int64(-(2**62))  # stands in for "cluster extends to -infinity"


def _step_radii(seed: int, n, vs, law: RadiusLaw) -> np.ndarray:
    return law.quantile_array(keyed_uniform_array(seed, CH_STEP_RADIUS, n, vs))


def _clock_fires(seed: int, n, vs, p2: float) -> np.ndarray:
    return keyed_uniform_array(seed, CH_CLOCK, n, vs) < p2


# ======================================================================
# exact set-based engine
# ======================================================================


@dataclass(frozen=True)
class ReactState:
    """Cluster [l, r] with the currently spreading vertices; step n's
    radii are keyed (seed, n, vertex), the clocks deciding who is active
    at step n+1 are keyed (seed, n+1, vertex)."""

    n: int
    l: int
    r: int
    active: tuple  # sorted vertices of the spreading set

    @property
    def active_count(self) -> int:
        return len(self.active)


def init_react(u: int = 0) -> ReactState:
    return ReactState(0, u, u, (u,))


def step_react(state: ReactState, law: RadiusLaw, p2: float, seed: int,
               floor: Optional[int] = None) -> ReactState:
    """One exact step, cost linear in the cluster size. With floor=u the
    process is the one-sided variant: the cluster never extends below u."""
    lo, hi = state.l, state.r
    if state.active:
        act = np.asarray(state.active, dtype=np.int64)
        radii = _step_radii(seed, state.n, act, law)
        hi = max(hi, int((act + radii).max()))
        if floor is None:
            lo = min(lo, int((act - radii).min()))
    cluster = np.arange(lo, hi + 1, dtype=np.int64)
    fires = _clock_fires(seed, state.n + 1, cluster, p2)
    heard_before = (cluster >= state.l) & (cluster <= state.r)
    new_active = cluster[~heard_before | fires]
    return ReactState(state.n + 1, lo, hi, tuple(int(v) for v in new_active))


def _run(seed: int, law: RadiusLaw, p2: float, horizon: int,
         floor: Optional[int], u: int) -> Trajectory:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    state = init_react(u)
    traj = Trajectory(outcome="censored", censor_reason="horizon")
    for _ in range(horizon + 1):
        traj.ns.append(state.n)
        traj.ls.append(state.l)
        traj.rs.append(state.r)
        traj.active_counts.append(state.active_count)
        if state.n == horizon:
            break
        state = step_react(state, law, p2, seed, floor=floor)
    return traj


def run_react(seed: int, law: RadiusLaw, p2: float, horizon: int) -> Trajectory:
    """Full-line reactivation run; an empty active set is never terminal,
    the fronts simply hold until a clock fires."""
    return _run(seed, law, p2, horizon, floor=None, u=0)


def run_one_sided_react(seed: int, law: RadiusLaw, p2: float, horizon: int,
                        u: int = 0) -> Trajectory:
    """One-sided variant started at u, spreading right only; consumes the
    same keyed draws as any coupled full-line process."""
    return _run(seed, law, p2, horizon, floor=u, u=u)


def coupled_basic_run(seed: int, law: RadiusLaw, horizon: int) -> Trajectory:
    """The basic (no-reactivation) dynamics driven by the per-step radius
    field I^n: each vertex draws at its activation step, extinction is
    absorbing. With p2 = 0 the reactivation engine must reproduce this run
    bit for bit."""
    l = r = 0
    new_l, new_r = 0, 1  # boundary blocks [l, l+new_l) and (r-new_r, r]
    traj = Trajectory()
    for n in range(horizon + 1):
        traj.ns.append(n)
        traj.ls.append(l)
        traj.rs.append(r)
        traj.active_counts.append(new_l + new_r)
        if n == horizon:
            traj.outcome = "censored"
            traj.censor_reason = "horizon"
            break
        active = np.concatenate([
            np.arange(l, l + new_l, dtype=np.int64),
            np.arange(r - new_r + 1, r + 1, dtype=np.int64),
        ])
        if active.size == 0:
            traj.outcome = "extinct"
            traj.tau = n
            traj.cluster_size = r - l + 1
            break
        radii = _step_radii(seed, n, active, law)
        hi = max(r, int((active + radii).max()))
        lo = min(l, int((active - radii).min()))
        new_l, new_r = l - lo, hi - r
        l, r = lo, hi
    return traj


# ======================================================================
# drift walks
# ======================================================================


def drift_theta(law: RadiusLaw, p2: float) -> float:
    """Probability that a given informed vertex both wakes and reaches at
    least one neighbour in a step: p2 * P(I >= 1)."""
    if not 0.0 <= p2 <= 1.0:
        raise ValueError(f"p2 must be a probability, got {p2}")
    return p2 * (1.0 - law.cdf(0))


def front_anchored_walk(seed: int, law: RadiusLaw, p2: float, rs) -> np.ndarray:
    """The walk that increments into step n when the clock AND a positive
    radius fire at the previous front position r_{n-1}, consulting exactly
    the keys the engine consumes for that transition: the draws deciding
    the move from step m to m+1 are keyed (m, vertex). A success therefore
    means the front vertex really was active and really reached, so
    X_n <= r_n pathwise on the coupled run. Returns X_0..X_N."""
    rs = np.asarray(rs, dtype=np.int64)
    steps = np.arange(0, rs.size - 1, dtype=np.int64)
    fires = _clock_fires(seed, steps, rs[:-1], p2)
    reaches = _step_radii(seed, steps, rs[:-1], law) >= 1
    x = np.zeros(rs.size, dtype=np.int64)
    np.cumsum(fires & reaches, out=x[1:])
    return x


def self_anchored_walk(seed: int, law: RadiusLaw, p2: float, horizon: int) -> np.ndarray:
    """The walk that consults the clock and radius at its OWN position
    Z_{n-1}. A success there means that vertex really spreads at step n,
    so Z_n <= r_{n+1} pathwise on the coupled run (the walk trails the
    front by at most the one-step reporting lag)."""
    z = np.zeros(horizon + 1, dtype=np.int64)
    for n in range(1, horizon + 1):
        v = int(z[n - 1])
        fire = keyed_uniform(seed, CH_CLOCK, n, v) < p2
        reach = law.quantile(keyed_uniform(seed, CH_STEP_RADIUS, n, v)) >= 1
        z[n] = z[n - 1] + (1 if fire and reach else 0)
    return z


# ======================================================================
# windowed front kernels
# ======================================================================


def _window_width(law: RadiusLaw, window: Optional[int]) -> tuple:
    """(width, error_budget_per_step_fn) for the front window."""
    k = law.support_bound
    if k is not None:
        if window is not None and window < k:
            raise ValueError(f"window {window} is narrower than the support bound {k}")
        return max(window or k, k, 1), True
    if window is None:
        raise ValueError(
            f"{law.label()} has unbounded support: front windowing is exact only "
            "for bounded laws; pass window=W to accept a truncation whose error "
            "budget is reported"
        )
    return int(window), False


def _truncation_budget(law: RadiusLaw, width: int, steps: int) -> float:
    # a vertex at depth >= width below a front matters only if its radius
    # reaches back across, so each step risks at most the tail sum past width-1
    return min(1.0, steps * law.tail_sum_beyond(width - 1))


def _step_window_masks(seeds, abs_step, pos, mask, law):
    """Reach extremes of the active window vertices. Returns (hi, lo) per
    lane; inactive slots contribute nothing."""
    radii = _step_radii_lanes(seeds, abs_step, pos, law)
    hi = np.where(mask, pos + radii, np.iinfo(np.int64).min)
    lo = np.where(mask, pos - radii, np.iinfo(np.int64).max)
    return hi.max(axis=1), lo.min(axis=1)


def _step_radii_lanes(seeds, abs_step, pos, law) -> np.ndarray:
    u = keyed_uniform_array(seeds[:, None], CH_STEP_RADIUS, abs_step[:, None], pos)
    return law.quantile_array(u)


def _clock_lanes(seeds, abs_step, pos, p2) -> np.ndarray:
    return keyed_uniform_array(seeds[:, None], CH_CLOCK, abs_step[:, None], pos) < p2


def _offsets(width: int) -> np.ndarray:
    return np.arange(width, dtype=np.int64)


def react_front_positions(seeds, law: RadiusLaw, n_steps: int, *, p2: float,
                          window: Optional[int] = None,
                          history: bool = False) -> dict:
    """Both fronts of many full-line reactivation runs after n_steps.

    Lane i is bit-exact with run_react(seeds[i], ...) for bounded laws.
    Returns {"l", "r", "certified", "error_budget"[, "r_history"]}.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    width, certified = _window_width(law, window)
    lanes = seeds.size
    off = _offsets(width)
    l = np.zeros(lanes, dtype=np.int64)
    r = np.zeros(lanes, dtype=np.int64)
    # right window covers r-width+1..r, left window covers l..l+width-1
    mask_r = np.zeros((lanes, width), dtype=bool)
    mask_r[:, -1] = True
    mask_l = np.zeros((lanes, width), dtype=bool)
    mask_l[:, 0] = True
    hist = np.zeros((lanes, n_steps + 1), dtype=np.int64) if history else None
    step_col = np.zeros(lanes, dtype=np.int64)
    for n in range(n_steps):
        step_col[:] = n
        pos_r = r[:, None] - (width - 1) + off
        pos_l = l[:, None] + off
        hi_r, lo_r = _step_window_masks(seeds, step_col, pos_r, mask_r, law)
        hi_l, lo_l = _step_window_masks(seeds, step_col, pos_l, mask_l, law)
        new_r = np.maximum(r, np.maximum(hi_r, hi_l))
        new_l = np.minimum(l, np.minimum(lo_r, lo_l))
        step_col[:] = n + 1
        pos_r2 = new_r[:, None] - (width - 1) + off
        pos_l2 = new_l[:, None] + off
        for pos, mask in ((pos_r2, mask_r), (pos_l2, mask_l)):
            fires = _clock_lanes(seeds, step_col, pos, p2)
            heard_before = (pos >= l[:, None]) & (pos <= r[:, None])
            newly = ~heard_before & (pos >= new_l[:, None]) & (pos <= new_r[:, None])
            mask[:] = newly | (heard_before & fires)
        l, r = new_l, new_r
        if history:
            hist[:, n + 1] = r
    out = {
        "l": l,
        "r": r,
        "certified": certified,
        "error_budget": 0.0 if certified else _truncation_budget(law, width, n_steps),
    }
    if history:
        out["r_history"] = hist
    return out


# ======================================================================
# domination probes
# ======================================================================


@dataclass(frozen=True)
class DominationProbe:
    """Outcome of co-evolving the everything-left-of-u process against the
    one-sided process from u on shared keys, for `horizon` steps."""

    u: int
    horizon: int
    outcome: str  # 'failed' | 'dominated'
    beta_r: Optional[int]
    step_offset: int = 0

    def __post_init__(self):
        if (self.outcome == "failed") != (self.beta_r is not None):
            raise ValueError("beta_r must be given exactly when the probe failed")

    def to_json_dict(self) -> dict:
        return {
            "u": self.u,
            "horizon": self.horizon,
            "outcome": "Failed" if self.outcome == "failed" else "DominatedThrough",
            "betaR": self.beta_r,
        }


def batch_probe_domination(seeds, law: RadiusLaw, p2: float, horizon: int, *,
                           us=0, step_offsets=0,
                           window: Optional[int] = None) -> np.ndarray:
    """First step at which the left-started front overtakes the one-sided
    front, per lane; -1 when domination holds through the horizon.

    Lane i couples the two processes on seeds[i]: they consult identical
    radius and clock values wherever they overlap. With step_offsets the
    probe's k-th step consumes the keys of absolute step offset+k, which is
    what lets a probe launched mid-run share its mother run's randomness.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    lanes = seeds.size
    width, _ = _window_width(law, window)
    off = _offsets(width)
    us = np.broadcast_to(np.asarray(us, dtype=np.int64), (lanes,)).copy()
    offsets = np.broadcast_to(np.asarray(step_offsets, dtype=np.int64), (lanes,)).copy()

    # left process: cluster (-inf, u-1], every vertex initially spreading
    r_l = us - 1
    mask_left = np.ones((lanes, width), dtype=bool)
    floor_l = np.full(lanes, _FLOOR_NONE, dtype=np.int64)
    # one-sided process: cluster {u}, spreading from u, never below u
    r_o = us.copy()
    mask_one = np.zeros((lanes, width), dtype=bool)
    mask_one[:, -1] = True
    floor_o = us.copy()

    beta = np.full(lanes, -1, dtype=np.int64)
    idx = np.arange(lanes)
    for k in range(horizon):
        abs_step = offsets + k
        for which in range(2):
            r_cur = r_l if which == 0 else r_o
            mask = mask_left if which == 0 else mask_one
            floor = floor_l if which == 0 else floor_o
            pos = r_cur[:, None] - (width - 1) + off
            hi, _ = _step_window_masks(seeds, abs_step, pos, mask, law)
            new_r = np.maximum(r_cur, hi)
            pos2 = new_r[:, None] - (width - 1) + off
            fires = _clock_lanes(seeds, abs_step + 1, pos2, p2)
            heard_before = (pos2 <= r_cur[:, None]) & (pos2 >= floor[:, None])
            newly = (pos2 > r_cur[:, None]) & (pos2 <= new_r[:, None])
            mask[:] = newly | (heard_before & fires)
            if which == 0:
                r_l = new_r
            else:
                r_o = new_r
        failed = r_l > r_o
        if failed.any():
            beta[idx[failed]] = k + 1
            keep = ~failed
            idx = idx[keep]
            if idx.size == 0:
                break
            seeds, offsets = seeds[keep], offsets[keep]
            r_l, r_o = r_l[keep], r_o[keep]
            mask_left, mask_one = mask_left[keep], mask_one[keep]
            floor_l, floor_o = floor_l[keep], floor_o[keep]
    return beta


def probe_domination(u: int, seed: int, law: RadiusLaw, p2: float, horizon: int,
                     *, step_offset: int = 0,
                     window: Optional[int] = None) -> DominationProbe:
    """Single-probe wrapper around batch_probe_domination."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    beta = batch_probe_domination(
        np.asarray([seed], dtype=np.uint64), law, p2, horizon,
        us=u, step_offsets=step_offset, window=window,
    )[0]
    if beta < 0:
        return DominationProbe(u, horizon, "dominated", None, step_offset)
    return DominationProbe(u, horizon, "failed", int(beta), step_offset)


# ======================================================================
# approximate renewals
# ======================================================================


@dataclass(frozen=True)
class ReactRenewalLedger:
    """Steps whose domination probe survived the confirmation lag H.

    This is an H-truncated surrogate for the untestable infinite-horizon
    event, so every number derived from it inherits the censoring caveat."""

    confirm_lag: int
    horizon: int
    taus: tuple  # ((n, r_n), ...)

    def increments(self) -> tuple:
        if len(self.taus) < 2:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        ts = np.asarray([t for t, _ in self.taus], dtype=np.int64)
        rs = np.asarray([r for _, r in self.taus], dtype=np.int64)
        return np.diff(ts), np.diff(rs)


def detect_renewals_react(seed: int, law: RadiusLaw, p2: float, horizon: int,
                          confirm_lag: int,
                          window: Optional[int] = None) -> ReactRenewalLedger:
    """Scan a run for steps n where the process restarted from its own front
    stays dominant for confirm_lag further steps, sharing the run's keys."""
    if confirm_lag < 1:
        raise ValueError("confirm_lag must be at least 1")
    hist = react_front_positions(
        np.asarray([seed], dtype=np.uint64), law, horizon + confirm_lag,
        p2=p2, window=window, history=True,
    )["r_history"][0]
    ns = np.arange(1, horizon + 1, dtype=np.int64)
    beta = batch_probe_domination(
        np.full(ns.size, seed, dtype=np.uint64), law, p2, confirm_lag,
        us=hist[ns], step_offsets=ns, window=window,
    )
    taus = tuple((int(n), int(hist[n])) for n, b in zip(ns, beta) if b < 0)
    return ReactRenewalLedger(confirm_lag, horizon, taus)


# ======================================================================
# standing assumptions
# ======================================================================


def check_standing_assumptions(law: RadiusLaw, p2: float) -> list:
    """The reactivation analysis is developed for radii with some mass at
    zero and an exponentially decaying tail; violations degrade the theory
    gracefully, so they warn instead of failing."""
    notes = []
    if law.p1 == 0.0:
        notes.append(
            f"{law.label()} has no mass at radius zero: the basic process never "
            "dies, so reactivation adds speed but no qualitative change"
        )
    if math.isfinite(law.moment_order_finite):
        notes.append(
            f"{law.label()} has a polynomial tail (finite moments only below "
            f"order {law.moment_order_finite:g}); the reactivation speed and "
            "renewal results assume lighter tails"
        )
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return notes
