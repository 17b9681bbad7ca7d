"""Front-spreading engine on the integer line.

State is the heard interval [l, r] plus the two boundary blocks of vertices
that were heard for the first time at the current step; nothing else can
spread, so a step costs O(new vertices) instead of O(interval). A literal
set-based reference stepper is kept alongside for differential testing.

Vertices may be deleted by a site environment: a deleted vertex still blocks
nothing and still gets heard, but it never spreads (its radius is treated as
absent). The origin is always treated as present so the process can start.

Randomness is keyed: vertex v's radius is a pure function of
(seed, CH_RADIUS, v), so co-evolving processes that share a seed see the
same radius field regardless of visit order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .laws import RadiusLaw
from .rng import CH_RADIUS, CH_SITE, keyed_uniform, keyed_uniform_array

__all__ = [
    "AllOccupied",
    "BernoulliSites",
    "MarkovSites",
    "environment_from_record",
    "BasicState",
    "Trajectory",
    "UntilExtinct",
    "Horizon",
    "RightReaches",
    "init",
    "step",
    "run",
    "run_one_sided",
    "step_reference",
    "radius_field",
    "trajectory_to_csv",
    "DEFAULT_STEP_CAP",
]

DEFAULT_STEP_CAP = 10**6


# ======================================================================
# site environments
# ======================================================================


@dataclass(frozen=True)
class AllOccupied:
    """Every vertex present."""

    def bind(self, seed: int) -> "_BoundAllOccupied":
        return _BoundAllOccupied()

    def record(self) -> dict:
        return {"kind": "all_occupied"}


@dataclass(frozen=True)
class BernoulliSites:
    """Each vertex independently present with probability p_occ."""

    p_occ: float

    def __post_init__(self):
        if not 0.0 < self.p_occ <= 1.0:
            raise ValueError(f"occupation probability must be in (0, 1], got {self.p_occ}")

    def bind(self, seed: int) -> "_BoundBernoulli":
        return _BoundBernoulli(self.p_occ, seed)

    def record(self) -> dict:
        return {"kind": "bernoulli_sites", "p_occ": self.p_occ}


@dataclass(frozen=True)
class MarkovSites:
    """Stationary two-state occupancy chain, extended from the origin in both
    directions (valid by reversibility), conditioned on the origin present.

    p00 is P(next absent | current absent), p11 is P(next present | current
    present).
    """

    p00: float
    p11: float

    def __post_init__(self):
        for name, p in (("p00", self.p00), ("p11", self.p11)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.p00 == 1.0 and self.p11 == 1.0:
            raise ValueError("p00 = p11 = 1 has no unique stationary occupancy")

    def bind(self, seed: int) -> "_BoundMarkov":
        return _BoundMarkov(self.p00, self.p11, seed)

    def record(self) -> dict:
        return {"kind": "markov_sites", "p00": self.p00, "p11": self.p11}


EnvironmentSpec = Union[AllOccupied, BernoulliSites, MarkovSites]


def environment_from_record(rec: dict) -> EnvironmentSpec:
    kinds = {
        "all_occupied": lambda r: AllOccupied(),
        "bernoulli_sites": lambda r: BernoulliSites(p_occ=float(r["p_occ"])),
        "markov_sites": lambda r: MarkovSites(p00=float(r["p00"]), p11=float(r["p11"])),
    }
    try:
        maker = kinds[rec["kind"]]
    except KeyError as exc:
        raise ValueError(f"unknown environment kind {rec.get('kind')!r}") from exc
    return maker(rec)


class _BoundAllOccupied:
    def occupied(self, v: int) -> bool:
        return True

    def occupied_array(self, vs: np.ndarray) -> np.ndarray:
        return np.ones(len(vs), dtype=bool)


class _BoundBernoulli:
    def __init__(self, p_occ: float, seed: int):
        self.p_occ = p_occ
        self.seed = seed

    def occupied(self, v: int) -> bool:
        return v == 0 or keyed_uniform(self.seed, CH_SITE, v) < self.p_occ

    def occupied_array(self, vs: np.ndarray) -> np.ndarray:
        u = keyed_uniform_array(self.seed, CH_SITE, vs)
        return (u < self.p_occ) | (np.asarray(vs) == 0)


class _BoundMarkov:
    """Lazily extends the chain left and right of the forced-present origin."""

    def __init__(self, p00: float, p11: float, seed: int):
        self.p00 = p00
        self.p11 = p11
        self.seed = seed
        self._right = [True]  # state at vertex v for v >= 0
        self._left = [True]  # state at vertex -v for v >= 0

    def _advance(self, prev: bool, u: float) -> bool:
        return (u < self.p11) if prev else (u >= self.p00)

    def _extend(self, side: list, upto: int, sign: int) -> None:
        while len(side) <= upto:
            v = sign * len(side)
            side.append(self._advance(side[-1], keyed_uniform(self.seed, CH_SITE, v)))

    def occupied(self, v: int) -> bool:
        if v >= 0:
            self._extend(self._right, v, +1)
            return self._right[v]
        self._extend(self._left, -v, -1)
        return self._left[-v]

    def occupied_array(self, vs: np.ndarray) -> np.ndarray:
        return np.fromiter((self.occupied(int(v)) for v in vs), dtype=bool, count=len(vs))


# ======================================================================
# state, stop rules, trajectories
# ======================================================================


@dataclass(frozen=True)
class BasicState:
    """Heard interval [l, r]; the vertices first heard at step n form the
    boundary blocks [l, l+new_left) and (r-new_right, r]."""

    n: int
    l: int
    r: int
    new_left: int
    new_right: int
    extinct_at: Optional[int] = None

    @property
    def active_count(self) -> int:
        return self.new_left + self.new_right

    @property
    def extinct(self) -> bool:
        return self.extinct_at is not None

    def active_vertices(self) -> list:
        out = list(range(self.l, self.l + self.new_left))
        out.extend(range(self.r - self.new_right + 1, self.r + 1))
        return out

    @property
    def cluster_size(self) -> int:
        return self.r - self.l + 1


@dataclass(frozen=True)
class UntilExtinct:
    step_cap: int = DEFAULT_STEP_CAP


@dataclass(frozen=True)
class Horizon:
    steps: int


@dataclass(frozen=True)
class RightReaches:
    target: int
    step_cap: int = DEFAULT_STEP_CAP


StopRule = Union[UntilExtinct, Horizon, RightReaches]


@dataclass
class Trajectory:
    """Per-step rows (n, l, r, active_count) plus how the run ended."""

    ns: list = field(default_factory=list)
    ls: list = field(default_factory=list)
    rs: list = field(default_factory=list)
    active_counts: list = field(default_factory=list)
    outcome: str = "censored"  # 'extinct' | 'censored'
    tau: Optional[int] = None
    cluster_size: Optional[int] = None
    censor_reason: Optional[str] = None  # 'horizon' | 'step-cap' | 'right-reached'

    def append(self, state: BasicState) -> None:
        self.ns.append(state.n)
        self.ls.append(state.l)
        self.rs.append(state.r)
        self.active_counts.append(state.active_count)

    @property
    def extinct(self) -> bool:
        return self.outcome == "extinct"

    def final_state_row(self) -> tuple:
        return self.ns[-1], self.ls[-1], self.rs[-1], self.active_counts[-1]


def trajectory_to_csv(traj: Trajectory, fh=None) -> str:
    """Frozen CSV schema: header, one row per step, one terminal comment."""
    buf = fh if fh is not None else io.StringIO()
    buf.write("n,l,r,active_count\n")
    for n, l, r, a in zip(traj.ns, traj.ls, traj.rs, traj.active_counts):
        buf.write(f"{n},{l},{r},{a}\n")
    if traj.outcome == "extinct":
        buf.write(f"# terminal=extinct tau={traj.tau} cluster={traj.cluster_size}\n")
    else:
        buf.write(f"# terminal=censored reason={traj.censor_reason}\n")
    return buf.getvalue() if fh is None else ""


# ======================================================================
# stepping
# ======================================================================


def radius_field(seed: int, law: RadiusLaw, v: int) -> int:
    """The static radius carried by vertex v under this seed."""
    return law.quantile(keyed_uniform(seed, CH_RADIUS, v))


def init(seed: int, env_spec: EnvironmentSpec = AllOccupied()):
    """Fresh process: only the origin heard and active; origin present."""
    state = BasicState(n=0, l=0, r=0, new_left=0, new_right=1)
    return state, env_spec.bind(seed)


def _block_reach(seed: int, law: RadiusLaw, env, a: int, b: int) -> tuple:
    """(min v - I_v, max v + I_v) over present vertices in [a, b]; (None, None)
    when every vertex in the block is absent."""
    vs = np.arange(a, b + 1, dtype=np.int64)
    occ = env.occupied_array(vs)
    vs = vs[occ]
    if vs.size == 0:
        return None, None
    radii = law.quantile_array(keyed_uniform_array(seed, CH_RADIUS, vs))
    return int(np.min(vs - radii)), int(np.max(vs + radii))


def step(state: BasicState, law: RadiusLaw, env, seed: int, one_sided: bool = False) -> BasicState:
    """Advance one step; extinction is absorbing."""
    if state.extinct:
        return state
    lo, hi = state.l, state.r
    blocks = []
    if state.new_left > 0:
        blocks.append((state.l, state.l + state.new_left - 1))
    if state.new_right > 0:
        blocks.append((state.r - state.new_right + 1, state.r))
    for a, b in blocks:
        reach_lo, reach_hi = _block_reach(seed, law, env, a, b)
        if reach_lo is None:
            continue
        lo = min(lo, reach_lo)
        hi = max(hi, reach_hi)
    if one_sided:
        lo = 0  # vertices left of the origin do not exist
    n1 = state.n + 1
    new_left = state.l - lo
    new_right = hi - state.r
    if new_left == 0 and new_right == 0:
        return BasicState(n1, state.l, state.r, 0, 0, extinct_at=n1)
    return BasicState(n1, lo, hi, new_left, new_right)


def _stopped(state: BasicState, stop: StopRule) -> Optional[str]:
    if isinstance(stop, UntilExtinct):
        if state.n >= stop.step_cap:
            return "step-cap"
    elif isinstance(stop, Horizon):
        if state.n >= stop.steps:
            return "horizon"
    elif isinstance(stop, RightReaches):
        if state.r >= stop.target:
            return "right-reached"
        if state.n >= stop.step_cap:
            return "step-cap"
    else:
        raise TypeError(f"unknown stop rule {stop!r}")
    return None


def _run(seed, law, env_spec, stop, one_sided: bool) -> Trajectory:
    state, env = init(seed, env_spec)
    traj = Trajectory()
    traj.append(state)
    while True:
        if state.extinct:
            traj.outcome = "extinct"
            traj.tau = state.extinct_at
            traj.cluster_size = state.cluster_size
            return traj
        reason = _stopped(state, stop)
        if reason is not None:
            traj.outcome = "censored"
            traj.censor_reason = reason
            return traj
        state = step(state, law, env, seed, one_sided=one_sided)
        traj.append(state)


def run(seed: int, law: RadiusLaw, env_spec: EnvironmentSpec = AllOccupied(),
        stop: StopRule = UntilExtinct()) -> Trajectory:
    """Two-sided process started from the origin."""
    return _run(seed, law, env_spec, stop, one_sided=False)


def run_one_sided(seed: int, law: RadiusLaw, env_spec: EnvironmentSpec = AllOccupied(),
                  stop: StopRule = UntilExtinct()) -> Trajectory:
    """Half-line variant: vertices below 0 never exist, so the heard set is
    [0, r] and only the right block spreads. Radii share keys with the
    two-sided process, which couples the two runs vertex by vertex."""
    return _run(seed, law, env_spec, stop, one_sided=True)


# ======================================================================
# literal reference stepper (oracle for differential tests)
# ======================================================================


def step_reference(heard: set, active: set, law: RadiusLaw, env, seed: int,
                   one_sided: bool = False) -> tuple:
    """One step of the definition, on explicit sets: every active present
    vertex v spreads to [v - I_v, v + I_v]; newly heard vertices form the
    next active set. Returns (heard, new_active)."""
    new = set()
    for v in sorted(active):
        if not env.occupied(int(v)):
            continue
        i = radius_field(seed, law, int(v))
        for w in range(v - i, v + i + 1):
            if one_sided and w < 0:
                continue
            if w not in heard:
                new.add(w)
    return heard | new, new
