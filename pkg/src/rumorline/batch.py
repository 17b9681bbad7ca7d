"""Vectorized many-replicate kernels.

Each kernel evolves all replicates at once on flat numpy arrays. Because
every random quantity is a pure function of (lane seed, channel, vertex),
lane i of a kernel reproduces the single-run engine under the same seed bit
for bit; differential tests assert exactly that.

Layout trick: each alive lane contributes one segment to a flat array per
step, always prefixed with a sentinel slot carrying the lane's current
boundary, so segmented min/max reductions (np.minimum/maximum.reduceat)
never see an empty segment and "no growth" falls out of the reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .engine import AllOccupied, BernoulliSites
from .laws import RadiusLaw
from .rng import CH_RADIUS, CH_SITE, keyed_uniform_array

__all__ = [
    "BatchTauResult",
    "batch_taus",
    "batch_front_positions",
    "batch_one_sided_unit_advance",
]

KernelEnv = Union[AllOccupied, BernoulliSites]


def _check_env(env_spec) -> None:
    if not isinstance(env_spec, (AllOccupied, BernoulliSites)):
        raise TypeError(
            "batch kernels support memoryless environments only; run the "
            "engine per replicate for Markov occupancy"
        )


def _segments(lens: np.ndarray) -> tuple:
    """(starts, seg_id, within) for concatenated segments of given lengths;
    lens must be >= 1 everywhere."""
    starts = np.zeros(lens.size, dtype=np.int64)
    np.cumsum(lens[:-1], out=starts[1:])
    total = int(starts[-1] + lens[-1]) if lens.size else 0
    seg_id = np.repeat(np.arange(lens.size), lens)
    within = np.arange(total, dtype=np.int64) - starts[seg_id]
    return starts, seg_id, within


def _step_lanes(seeds, l, r, pl, pr, env_spec, law, one_sided: bool) -> tuple:
    """One synchronous step for all lanes. Returns (new_l, new_r, grew)."""
    nl = pl - l
    nr = r - pr
    # per-lane flat layout: [sentinel, left block (nl), right block (nr)]
    lens = 1 + nl + nr
    starts, seg_id, within = _segments(lens)
    is_sent = within == 0
    in_left = ~is_sent & (within <= nl[seg_id])
    # left block vertices are l..pl-1, right block vertices are pr+1..r
    vertex = np.where(
        in_left,
        l[seg_id] + (within - 1),
        pr[seg_id] + (within - nl[seg_id]),
    )
    lane_seed = seeds[seg_id]
    val_lo = np.empty(vertex.size, dtype=np.int64)
    val_hi = np.empty(vertex.size, dtype=np.int64)
    body = ~is_sent
    if np.any(body):
        vb = vertex[body]
        sb = lane_seed[body]
        radii = law.quantile_array(keyed_uniform_array(sb, CH_RADIUS, vb))
        if isinstance(env_spec, BernoulliSites):
            occ = (keyed_uniform_array(sb, CH_SITE, vb) < env_spec.p_occ) | (vb == 0)
            radii = np.where(occ, radii, -1)  # absent: reach shrinks to nothing
        lo_b = np.where(radii >= 0, vb - radii, np.iinfo(np.int64).max)
        hi_b = np.where(radii >= 0, vb + radii, np.iinfo(np.int64).min)
        val_lo[body] = lo_b
        val_hi[body] = hi_b
    val_lo[is_sent] = l
    val_hi[is_sent] = r
    new_l = np.minimum.reduceat(val_lo, starts)
    new_r = np.maximum.reduceat(val_hi, starts)
    if one_sided:
        new_l = np.zeros_like(new_l)
    grew = (new_l < l) | (new_r > r)
    return new_l, new_r, grew


@dataclass
class BatchTauResult:
    """Extinction times and final cluster stats per replicate; censored lanes
    carry tau = -1 and the values at the horizon."""

    tau: np.ndarray  # int64, -1 if censored
    cluster: np.ndarray  # r - l + 1 at extinction (or at horizon if censored)
    final_l: np.ndarray
    final_r: np.ndarray

    @property
    def censored(self) -> np.ndarray:
        return self.tau < 0

    @property
    def n(self) -> int:
        return self.tau.size

    def survival(self, n: int) -> float:
        """P-hat(tau > n): censored lanes survived past the horizon."""
        return float(np.mean((self.tau > n) | self.censored))


def batch_taus(seeds: np.ndarray, law: RadiusLaw, env_spec: KernelEnv = AllOccupied(),
               horizon: int = 512) -> BatchTauResult:
    """Run every lane until extinction or the horizon; lane i is bit-exact
    with `run(seeds[i], law, env_spec, ...)`."""
    _check_env(env_spec)
    seeds = np.asarray(seeds, dtype=np.uint64)
    n_lanes = seeds.size
    tau = np.full(n_lanes, -1, dtype=np.int64)
    out_l = np.zeros(n_lanes, dtype=np.int64)
    out_r = np.zeros(n_lanes, dtype=np.int64)
    # alive-lane compacted state
    idx = np.arange(n_lanes)
    l = np.zeros(n_lanes, dtype=np.int64)
    r = np.zeros(n_lanes, dtype=np.int64)
    pl = np.zeros(n_lanes, dtype=np.int64)  # blocks: [l, pl) and (pr, r]
    pr = np.full(n_lanes, -1, dtype=np.int64)
    for n in range(1, horizon + 1):
        if idx.size == 0:
            break
        new_l, new_r, grew = _step_lanes(seeds[idx], l, r, pl, pr, env_spec, law, False)
        died = ~grew
        if np.any(died):
            di = idx[died]
            tau[di] = n
            out_l[di] = l[died]
            out_r[di] = r[died]
        pl, pr = l[grew], r[grew]
        l, r = new_l[grew], new_r[grew]
        idx = idx[grew]
    if idx.size:
        out_l[idx] = l
        out_r[idx] = r
    return BatchTauResult(tau, out_r - out_l + 1, out_l, out_r)


def batch_front_positions(seeds: np.ndarray, law: RadiusLaw, n_steps: int,
                          env_spec: KernelEnv = AllOccupied(), one_sided: bool = False,
                          history: bool = False) -> dict:
    """Evolve all lanes for exactly n_steps (or until extinction) and return
    the front positions; with history=True also the full (lanes, n_steps+1)
    right-front matrix."""
    _check_env(env_spec)
    seeds = np.asarray(seeds, dtype=np.uint64)
    n_lanes = seeds.size
    l = np.zeros(n_lanes, dtype=np.int64)
    r = np.zeros(n_lanes, dtype=np.int64)
    pl = np.zeros(n_lanes, dtype=np.int64)
    pr = np.full(n_lanes, -1, dtype=np.int64)
    dead = np.zeros(n_lanes, dtype=bool)
    tau = np.full(n_lanes, -1, dtype=np.int64)
    hist = np.zeros((n_lanes, n_steps + 1), dtype=np.int64) if history else None
    for n in range(1, n_steps + 1):
        new_l, new_r, grew = _step_lanes(seeds, l, r, pl, pr, env_spec, law, one_sided)
        newly_dead = ~grew & ~dead
        tau[newly_dead] = n
        dead |= newly_dead
        # dead lanes freeze: blocks empty (pl=l, pr=r) keeps them inert
        pl = np.where(dead, new_l, l)
        pr = np.where(dead, new_r, r)
        l, r = new_l, new_r
        if history:
            hist[:, n] = r
    out = {"l": l, "r": r, "tau": tau, "dead": dead}
    if history:
        out["r_history"] = hist
    return out


def batch_one_sided_unit_advance(seeds: np.ndarray, law: RadiusLaw,
                                 step_cap: int = 10**4) -> tuple:
    """Per lane, the first one-sided step whose advance is exactly 1.

    Returns (gamma, r_gamma) int64 arrays with -1 where the lane died or hit
    the cap first; lane i matches one_sided_renewal_sample(seeds[i], ...)."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    n_lanes = seeds.size
    gamma = np.full(n_lanes, -1, dtype=np.int64)
    r_gamma = np.full(n_lanes, -1, dtype=np.int64)
    idx = np.arange(n_lanes)
    l = np.zeros(n_lanes, dtype=np.int64)
    r = np.zeros(n_lanes, dtype=np.int64)
    pl = np.zeros(n_lanes, dtype=np.int64)
    pr = np.full(n_lanes, -1, dtype=np.int64)
    for n in range(1, step_cap + 1):
        if idx.size == 0:
            break
        new_l, new_r, grew = _step_lanes(seeds[idx], l, r, pl, pr, AllOccupied(), law, True)
        hit = grew & (new_r - r == 1)
        if np.any(hit):
            hi = idx[hit]
            gamma[hi] = n
            r_gamma[hi] = new_r[hit]
        cont = grew & ~hit
        pl, pr = l[cont], r[cont]
        l, r = new_l[cont], new_r[cont]
        idx = idx[cont]
    return gamma, r_gamma
