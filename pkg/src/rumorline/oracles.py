"""Exact small-instance distributions by exhaustive enumeration.

For a finite-support radius law and a short horizon, every distinct outcome
path can be enumerated: radii are assigned lazily, one per vertex at the step
that vertex first spreads, so a root-to-leaf path branches once per activated
vertex. Activity within h steps lives inside the window [-K*h, K*h] (K the
support bound), which caps the work at |support|^(window size); requests
beyond a work budget are refused with the estimate attached.

These exact distributions are the ground truth that the Monte Carlo engines
and estimators are tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

from .laws import FiniteSupport, RadiusLaw

__all__ = [
    "EnumerationSpec",
    "EnumerationBudgetError",
    "ExactDistributions",
    "enumerate_exact",
    "exact_tau_distribution",
    "exact_cluster_distribution",
    "exact_overshoot_distribution",
    "exact_tau_distribution_bruteforce",
    "random_sum_identities",
    "MASS_CLOSURE_TOL",
    "WORK_BUDGET",
]

MASS_CLOSURE_TOL = 1e-10
WORK_BUDGET = 10**8
MAX_HORIZON = 4


class EnumerationBudgetError(ValueError):
    """Raised when an enumeration would exceed the work budget."""


@dataclass(frozen=True)
class EnumerationSpec:
    law: FiniteSupport
    horizon: int

    def __post_init__(self):
        if not isinstance(self.law, FiniteSupport):
            raise TypeError("exact enumeration requires a finite-support law")
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise ValueError(f"horizon must be in [1, {MAX_HORIZON}], got {self.horizon}")

    @property
    def window_halfwidth(self) -> int:
        return self.law.support_bound * self.horizon

    def required_work(self) -> float:
        support_size = len(self.law.support_values())
        window = 2 * self.window_halfwidth + 1
        return float(support_size) ** window

    def check_budget(self) -> None:
        work = self.required_work()
        if work > WORK_BUDGET:
            raise EnumerationBudgetError(
                f"enumeration needs about {work:.3g} paths, budget is {WORK_BUDGET:.3g}"
            )


@dataclass(frozen=True)
class ExactDistributions:
    """tau and cluster-size masses for paths that die within the horizon;
    censored_mass is the probability of still being alive at the horizon."""

    spec: EnumerationSpec
    tau: dict
    cluster_size: dict
    censored_mass: float

    def mass_closure(self) -> float:
        return math.fsum(list(self.tau.values()) + [self.censored_mass])

    def to_json_dict(self) -> dict:
        return {
            "law": self.spec.law.record(),
            "law_hash": self.spec.law.law_hash(),
            "horizon": self.spec.horizon,
            "tau": {str(k): v for k, v in sorted(self.tau.items())},
            "cluster_size": {str(k): v for k, v in sorted(self.cluster_size.items())},
            "censored_mass": self.censored_mass,
        }


def enumerate_exact(spec: EnumerationSpec) -> ExactDistributions:
    """Walk every outcome path once, splitting on the radii of the vertices
    that activate. Probabilities are compensated sums of path weights."""
    spec.check_budget()
    law = spec.law
    support = [int(v) for v in law.support_values()]
    probs = [law.pmf(v) for v in support]
    h = spec.horizon

    tau_parts: dict = {}
    cluster_parts: dict = {}
    censored_parts: list = []

    # state: (l, r, new_left, new_right) with the same block convention as
    # the engine; depth is the current step index n
    def rec(l: int, r: int, nl: int, nr: int, depth: int, weight: float) -> None:
        if nl == 0 and nr == 0:
            tau_parts.setdefault(depth, []).append(weight)
            cluster_parts.setdefault(r - l + 1, []).append(weight)
            return
        if depth == h:
            censored_parts.append(weight)
            return
        active = list(range(l, l + nl)) + list(range(r - nr + 1, r + 1))
        for combo in itertools.product(range(len(support)), repeat=len(active)):
            w = weight
            lo, hi = l, r
            for v, ci in zip(active, combo):
                w *= probs[ci]
                radius = support[ci]
                lo = min(lo, v - radius)
                hi = max(hi, v + radius)
            rec(lo, hi, l - lo, hi - r, depth + 1, w)

    rec(0, 0, 0, 1, 0, 1.0)

    tau = {k: math.fsum(v) for k, v in sorted(tau_parts.items())}
    cluster = {k: math.fsum(v) for k, v in sorted(cluster_parts.items())}
    out = ExactDistributions(spec, tau, cluster, math.fsum(censored_parts))
    closure = out.mass_closure()
    if abs(closure - 1.0) > MASS_CLOSURE_TOL:
        raise AssertionError(f"enumeration mass {closure!r} fails closure")
    return out


def exact_tau_distribution(spec: EnumerationSpec) -> ExactDistributions:
    return enumerate_exact(spec)


def exact_cluster_distribution(spec: EnumerationSpec) -> ExactDistributions:
    return enumerate_exact(spec)


def exact_overshoot_distribution(law: RadiusLaw) -> dict:
    """Distribution of max(0, max_{0<=i<K} (I_{-i} - i)): only the K vertices
    nearest the boundary can reach past it when radii are bounded by K."""
    kmax = law.support_bound
    if kmax is None:
        raise TypeError("exact enumeration requires a bounded law")
    support = [v for v in range(kmax + 1) if law.pmf(v) > 0.0]
    probs = [law.pmf(v) for v in support]
    depth = max(kmax, 1)
    parts: dict = {}
    for combo in itertools.product(range(len(support)), repeat=depth):
        w = 1.0
        best = 0
        for i, ci in enumerate(combo):
            w *= probs[ci]
            best = max(best, support[ci] - i)
        parts.setdefault(best, []).append(w)
    out = {k: math.fsum(v) for k, v in sorted(parts.items())}
    if abs(math.fsum(out.values()) - 1.0) > MASS_CLOSURE_TOL:
        raise AssertionError("overshoot enumeration fails mass closure")
    return out


def exact_tau_distribution_bruteforce(spec: EnumerationSpec) -> ExactDistributions:
    """Unpruned cross-check: enumerate a full radius field over the whole
    window and step the definition directly. Exponentially more work than
    enumerate_exact; intended for tiny spot checks only."""
    spec.check_budget()
    law = spec.law
    support = [int(v) for v in law.support_values()]
    probs = [law.pmf(v) for v in support]
    h = spec.horizon
    half = spec.window_halfwidth
    window = list(range(-half, half + 1))

    tau_parts: dict = {}
    cluster_parts: dict = {}
    censored_parts: list = []
    for combo in itertools.product(range(len(support)), repeat=len(window)):
        w = 1.0
        for ci in combo:
            w *= probs[ci]
        field = {v: support[ci] for v, ci in zip(window, combo)}
        heard, active = {0}, {0}
        tau: Optional[int] = None
        for n in range(1, h + 1):
            new = set()
            for v in active:
                i = field[v]
                for x in range(v - i, v + i + 1):
                    if x not in heard:
                        new.add(x)
            heard |= new
            active = new
            if not active:
                tau = n
                break
        if tau is None:
            censored_parts.append(w)
        else:
            tau_parts.setdefault(tau, []).append(w)
            cluster_parts.setdefault(max(heard) - min(heard) + 1, []).append(w)

    tau_d = {k: math.fsum(v) for k, v in sorted(tau_parts.items())}
    cluster = {k: math.fsum(v) for k, v in sorted(cluster_parts.items())}
    return ExactDistributions(spec, tau_d, cluster, math.fsum(censored_parts))


def reactivated_front_speed_unit_radius(q: float, p2: float) -> float:
    """Exact asymptotic right-front speed under reactivation for radius laws
    supported on {0, 1} with q = P(radius = 1).

    With unit radii the right front is an autonomous two-state chain in the
    indicator x_n = 1{front vertex active}: an active front advances with
    probability q (the fresh vertex is then active for free), and a front
    vertex that did not just advance is active iff its clock fired, with
    probability p2.  Hence P(x' = 1) = q x + (1 - q x) p2, whose fixed point
    is pi = p2 / (1 - q (1 - p2)), and the speed is q * pi.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if not 0.0 <= p2 <= 1.0:
        raise ValueError(f"p2 must lie in [0, 1], got {p2}")
    if q == 1.0:
        # An always-advancing front never leaves the active state.
        return 1.0
    return q * p2 / (1.0 - q * (1.0 - p2))


def random_sum_identities(eta_mean: float, eta_var: float,
                          x_mean: float, x_var: float) -> dict:
    """Moments of Z = sum_{i<=eta} X_i with eta independent of the i.i.d. X_i:
    E Z = E(eta) E(X) and Var Z = E(eta) Var(X) + Var(eta) E(X)^2. Used to
    cross-check estimator bookkeeping on compound quantities."""
    return {
        "mean": eta_mean * x_mean,
        "variance": eta_mean * x_var + eta_var * x_mean**2,
    }
