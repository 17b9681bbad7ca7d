"""Radius-of-influence laws and their analytic objects.

A radius law is an integer-valued distribution on {0, 1, 2, ...} describing
how far a vertex spreads the rumour when it activates. This module defines
the five law kinds, exact CDF/tail/moment access, inverse-CDF sampling from a
single uniform (so couplings across parameters are well defined), the
left-block containment product, a certified percolation criterion, and the
boundary-overshoot distribution.

All verdicts returned by `percolation_criterion` are backed by explicit
certificates; when neither a divergence nor a convergence certificate fires
within the configured budget the answer is Inconclusive rather than a guess.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special as sp

__all__ = [
    "RadiusLaw",
    "Constant",
    "Geometric",
    "GeometricMin1",
    "PolynomialTail",
    "FiniteSupport",
    "HeavyTailError",
    "Verdict",
    "CriterionResult",
    "containment_probability",
    "percolation_criterion",
    "OvershootQuery",
    "OvershootCdfResult",
    "ExactBounded",
    "TailBudget",
    "overshoot_query",
    "overshoot_cdf",
    "overshoot_sample",
    "overshoot_sample_many",
    "law_from_record",
    "DEFAULT_CRITERION_NMAX",
    "DEFAULT_CRITERION_TOL",
]

PMF_MASS_TOL = 1e-12
DEFAULT_CRITERION_NMAX = 10**6
DEFAULT_CRITERION_TOL = 1e-8

# Quantile results are capped here; a cap is hit with probability < 2^-53 per
# draw (only unbounded laws at u within one ulp of 1) and front positions stay
# far inside int64 either way.
_QUANTILE_CAP = 2**62


class HeavyTailError(ValueError):
    """Raised when an operation needs more finite moments than the law has."""


# ======================================================================
# law classes
# ======================================================================


class RadiusLaw:
    """Base class. Subclasses are immutable and hashable."""

    kind: str = "abstract"

    # --- distribution access -----------------------------------------
    def pmf(self, k: int) -> float:
        raise NotImplementedError

    def cdf(self, k: int) -> float:
        """P(I <= k); defined for all integer k (0 below the support)."""
        return float(self.cdf_array(np.asarray([k], dtype=np.int64))[0])

    def cdf_array(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tail(self, k: int) -> float:
        """P(I > k)."""
        return 1.0 - self.cdf(k)

    def tail_sum_beyond(self, d: int) -> float:
        """Certified upper bound on sum_{j>d} P(I > j); exact where closed form."""
        raise NotImplementedError

    # True when m * tail(2m) is nondecreasing in m; gates the convergence
    # certificate in percolation_criterion (see _certify_tail_sum).
    tail_block_mass_monotone: bool = False

    # --- metadata ------------------------------------------------------
    @property
    def p1(self) -> float:
        return self.cdf(0)

    @property
    def support_bound(self) -> Optional[int]:
        return None

    @property
    def moment_order_finite(self) -> float:
        return math.inf

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    # --- sampling ------------------------------------------------------
    def quantile_array(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF: smallest k with u < CDF(k), elementwise, int64."""
        raise NotImplementedError

    def quantile(self, u: float) -> int:
        # Scalar path routed through the array path so that engine-level and
        # kernel-level draws agree bit for bit.
        return int(self.quantile_array(np.asarray([u], dtype=np.float64))[0])

    def sample(self, rng: np.random.Generator) -> int:
        return self.quantile(rng.random())

    def sample_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.quantile_array(rng.random(n))

    # --- plumbing --------------------------------------------------------
    def record(self) -> dict:
        """Tagged record for configs/manifests, e.g. {'kind': 'geometric', 'q': 0.5}."""
        raise NotImplementedError

    def label(self) -> str:
        rec = self.record()
        args = ", ".join(f"{k}={v}" for k, v in rec.items() if k != "kind")
        return f"{rec['kind']}({args})"

    def law_hash(self) -> str:
        blob = json.dumps(self.record(), sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()

    def _quantile_fixup(self, k: np.ndarray, u: np.ndarray) -> np.ndarray:
        # Closed-form quantile guesses can be off by an ulp-induced step;
        # enforce the exact inverse-CDF contract: min k with u < CDF(k).
        # Stragglers (guesses off by more than a couple of steps, e.g. u
        # within an ulp of 1) fall through to a bracketed bisection.
        for _ in range(2):
            low = u >= self.cdf_array(k)
            if not low.any():
                break
            k = k + low.astype(np.int64)
        for _ in range(2):
            high = (k > 0) & (u < self.cdf_array(np.maximum(k - 1, 0)))
            if not high.any():
                break
            k = k - high.astype(np.int64)
        bad = ((u >= self.cdf_array(k)) & (k < _QUANTILE_CAP)) | (
            (k > 0) & (u < self.cdf_array(np.maximum(k - 1, 0)))
        )
        if bad.any():
            k = k.copy()
            k[bad] = self._quantile_bisect(u[bad], k[bad])
        return np.minimum(k, _QUANTILE_CAP)

    def _quantile_bisect(self, u: np.ndarray, k0: np.ndarray) -> np.ndarray:
        """Min k with u < CDF(k) by gallop-and-bisect; saturates at the cap."""
        lo = np.full(k0.shape, -1, dtype=np.int64)
        hi = np.maximum(k0, 0)
        sat = np.zeros(k0.shape, dtype=bool)
        while True:
            need = (u >= self.cdf_array(hi)) & ~sat
            if not need.any():
                break
            sat |= need & (hi >= _QUANTILE_CAP)
            lo = np.where(need, hi, lo)
            hi = np.where(need & ~sat, np.minimum(hi * 2 + 1, _QUANTILE_CAP), hi)
        active = (hi - lo > 1) & ~sat
        while active.any():
            mid = lo + (hi - lo) // 2
            go_up = u >= self.cdf_array(mid)
            lo = np.where(active & go_up, mid, lo)
            hi = np.where(active & ~go_up, mid, hi)
            active = (hi - lo > 1) & ~sat
        return np.where(sat, _QUANTILE_CAP, hi)

    def __repr__(self) -> str:
        return self.label()


@dataclass(frozen=True, repr=False)
class Constant(RadiusLaw):
    """I = c surely."""

    c: int
    kind: str = field(default="constant", init=False)

    def __post_init__(self):
        if self.c < 0 or self.c != int(self.c):
            raise ValueError(f"constant radius must be a nonnegative integer, got {self.c}")

    def pmf(self, k: int) -> float:
        return 1.0 if k == self.c else 0.0

    def cdf_array(self, k) -> np.ndarray:
        k = np.asarray(k)
        return np.where(k >= self.c, 1.0, 0.0)

    def tail_sum_beyond(self, d: int) -> float:
        return float(max(0, self.c - 1 - d))

    @property
    def support_bound(self) -> Optional[int]:
        return self.c

    def mean(self) -> float:
        return float(self.c)

    def variance(self) -> float:
        return 0.0

    def quantile_array(self, u) -> np.ndarray:
        return np.full(np.shape(u), self.c, dtype=np.int64)

    def record(self) -> dict:
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True, repr=False)
class Geometric(RadiusLaw):
    """P(I = k) = (1-q) q^k on {0, 1, 2, ...}."""

    q: float
    kind: str = field(default="geometric", init=False)

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"geometric parameter must satisfy 0 < q < 1, got {self.q}")

    def pmf(self, k: int) -> float:
        return (1.0 - self.q) * self.q**k if k >= 0 else 0.0

    def cdf_array(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        return np.where(k >= 0, 1.0 - np.power(self.q, k + 1.0), 0.0)

    def tail_sum_beyond(self, d: int) -> float:
        # sum_{j>d} q^{j+1}
        return self.q ** (d + 2) / (1.0 - self.q)

    def mean(self) -> float:
        return self.q / (1.0 - self.q)

    def variance(self) -> float:
        return self.q / (1.0 - self.q) ** 2

    def quantile_array(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        # smallest k with q^{k+1} < 1-u
        raw = np.ceil(np.log1p(-u) / math.log(self.q)) - 1.0
        k = np.clip(raw, 0, _QUANTILE_CAP).astype(np.int64)
        return self._quantile_fixup(k, u)

    def record(self) -> dict:
        return {"kind": "geometric", "q": self.q}


@dataclass(frozen=True, repr=False)
class GeometricMin1(RadiusLaw):
    """Geometric shifted to {1, 2, ...}: P(I = k) = (1-q) q^{k-1}."""

    q: float
    kind: str = field(default="geometric_min1", init=False)

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"geometric parameter must satisfy 0 < q < 1, got {self.q}")

    def pmf(self, k: int) -> float:
        return (1.0 - self.q) * self.q ** (k - 1) if k >= 1 else 0.0

    def cdf_array(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        return np.where(k >= 0, 1.0 - np.power(self.q, np.maximum(k, 0.0)), 0.0)

    def tail_sum_beyond(self, d: int) -> float:
        # tail(j) = q^j, so sum_{j>d} = q^{d+1}/(1-q)
        return self.q ** (d + 1) / (1.0 - self.q)

    def mean(self) -> float:
        return 1.0 / (1.0 - self.q)

    def variance(self) -> float:
        return self.q / (1.0 - self.q) ** 2

    def quantile_array(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        # smallest k >= 1 with q^k < 1-u
        raw = np.ceil(np.log1p(-u) / math.log(self.q))
        k = np.clip(raw, 1, _QUANTILE_CAP).astype(np.int64)
        return self._quantile_fixup(k, u)

    def record(self) -> dict:
        return {"kind": "geometric_min1", "q": self.q}


@dataclass(frozen=True, repr=False)
class PolynomialTail(RadiusLaw):
    """P(I > i) = c (i+1)^(-alpha) exactly, for i >= 0.

    Requires c <= 1 so that P(I = 0) = 1 - c is a probability. Moments of
    order >= alpha are infinite.
    """

    alpha: float
    c: float
    kind: str = field(default="polynomial_tail", init=False)

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"tail coefficient must satisfy 0 < c <= 1, got {self.c}")

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k == 0:
            return 1.0 - self.c
        return self.c * (k ** (-self.alpha) - (k + 1) ** (-self.alpha))

    def cdf_array(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        kp = np.maximum(k, 0.0)
        return np.where(k >= 0, 1.0 - self.c * np.power(kp + 1.0, -self.alpha), 0.0)

    def tail_sum_beyond(self, d: int) -> float:
        if self.alpha <= 1.0:
            return math.inf
        # sum_{j>d} c (j+1)^-a <= c * integral_{d+1}^inf x^-a dx
        return self.c * (d + 1.0) ** (1.0 - self.alpha) / (self.alpha - 1.0)

    # m * tail(2m) = c m (2m+1)^-a is nondecreasing in m iff a <= 1.
    @property
    def tail_block_mass_monotone(self) -> bool:  # type: ignore[override]
        return self.alpha <= 1.0

    @property
    def moment_order_finite(self) -> float:
        return self.alpha

    def mean(self) -> float:
        if self.alpha <= 1.0:
            return math.inf
        return self.c * float(sp.zeta(self.alpha))

    def variance(self) -> float:
        if self.alpha <= 2.0:
            return math.inf
        second = self.c * (2.0 * float(sp.zeta(self.alpha - 1.0)) - float(sp.zeta(self.alpha)))
        return second - self.mean() ** 2

    def quantile_array(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        # smallest k with (k+1)^alpha > c/(1-u); inf guesses clip to the cap
        y = self.c / (1.0 - u)
        with np.errstate(over="ignore"):
            raw = np.ceil(np.power(y, 1.0 / self.alpha)) - 1.0
        k = np.clip(raw, 0, _QUANTILE_CAP).astype(np.int64)
        return self._quantile_fixup(k, u)

    def record(self) -> dict:
        return {"kind": "polynomial_tail", "alpha": self.alpha, "c": self.c}


class FiniteSupport(RadiusLaw):
    """Explicit pmf over {0, ..., K}. Mass must sum to 1 within 1e-12."""

    kind = "finite_support"

    def __init__(self, pmf: Sequence[float]):
        vec = np.asarray(list(pmf), dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("pmf must be a nonempty vector")
        if np.any(vec < 0.0):
            raise ValueError("pmf entries must be nonnegative")
        mass = math.fsum(vec.tolist())
        if abs(mass - 1.0) > PMF_MASS_TOL:
            raise ValueError(f"pmf mass {mass:g}")
        self._pmf = vec
        cum = np.cumsum(vec)
        cum[-1] = 1.0  # close the CDF exactly at the top of the support
        self._cum = cum
        nonzero = np.nonzero(vec)[0]
        self._k_max = int(nonzero[-1])

    def pmf(self, k: int) -> float:
        if 0 <= k < self._pmf.size:
            return float(self._pmf[k])
        return 0.0

    def cdf_array(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        idx = np.clip(k, 0, self._cum.size - 1)
        vals = self._cum[idx]
        return np.where(k < 0, 0.0, np.where(k >= self._k_max, 1.0, vals))

    def tail_sum_beyond(self, d: int) -> float:
        js = range(max(d + 1, 0), self._k_max)
        return math.fsum(1.0 - float(self._cum[j]) for j in js)

    @property
    def support_bound(self) -> Optional[int]:
        return self._k_max

    def mean(self) -> float:
        ks = np.arange(self._pmf.size, dtype=np.float64)
        return float(np.dot(ks, self._pmf))

    def variance(self) -> float:
        ks = np.arange(self._pmf.size, dtype=np.float64)
        second = float(np.dot(ks * ks, self._pmf))
        return second - self.mean() ** 2

    def quantile_array(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        k = np.searchsorted(self._cum, u, side="right")
        return np.minimum(k, self._k_max).astype(np.int64)

    def support_values(self) -> np.ndarray:
        """Values with positive mass (used by the enumeration oracles)."""
        return np.nonzero(self._pmf)[0].astype(np.int64)

    def record(self) -> dict:
        return {"kind": "finite_support", "pmf": [float(x) for x in self._pmf]}

    def __eq__(self, other):
        return isinstance(other, FiniteSupport) and np.array_equal(self._pmf, other._pmf)

    def __hash__(self):
        return hash(tuple(self._pmf.tolist()))

    def __repr__(self) -> str:
        return self.label()


def law_from_record(rec: dict) -> RadiusLaw:
    """Inverse of RadiusLaw.record(); used by config parsing."""
    kinds = {
        "constant": lambda r: Constant(c=int(r["c"])),
        "geometric": lambda r: Geometric(q=float(r["q"])),
        "geometric_min1": lambda r: GeometricMin1(q=float(r["q"])),
        "polynomial_tail": lambda r: PolynomialTail(alpha=float(r["alpha"]), c=float(r["c"])),
        "finite_support": lambda r: FiniteSupport(pmf=r["pmf"]),
    }
    try:
        maker = kinds[rec["kind"]]
    except KeyError as exc:
        raise ValueError(f"unknown law kind {rec.get('kind')!r}") from exc
    return maker(rec)


# ======================================================================
# containment products and percolation criterion
# ======================================================================


def containment_probability(law: RadiusLaw, n: int) -> float:
    """prod_{i=0}^{n} CDF(i): probability that none of the n+1 vertices at
    depths 0..n below a boundary reaches past it."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    cdfs = law.cdf_array(np.arange(n + 1, dtype=np.int64))
    out = 1.0
    for v in cdfs:
        out *= float(v)
    return out


class Verdict(enum.Enum):
    NO_PERCOLATION = "NoPercolation"
    PERCOLATES_WITH_POSITIVE_PROB = "PercolatesWithPositiveProb"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class CriterionResult:
    verdict: Verdict
    certificate: str  # 'exact-zero' | 'positive-limit' | 'tail-sum' | 'none'
    detail: dict

    def __iter__(self):  # allows `verdict, cert, detail = result`
        return iter((self.verdict, self.certificate, self.detail))


def percolation_criterion(
    law: RadiusLaw,
    nmax: int = DEFAULT_CRITERION_NMAX,
    tol: float = DEFAULT_CRITERION_TOL,
) -> CriterionResult:
    """Decide whether the containment series sum_n prod_{i<=n} CDF(i) diverges.

    Divergence (the series has a certified-positive term floor) means the
    process cannot grow without bound; a certified-finite sum means unbounded
    growth has positive probability. Certificates:

    - exact-zero: some CDF(i) = 0 makes every later term exactly 0.
    - positive-limit: limit of the product is certifiably >= tol (or exactly
      positive for bounded laws), via prod_{i>n}(1-t_i) >= 1 - sum t_i.
    - tail-sum: remainder sum beyond the computed prefix certified < tol by
      doubling blocks (needs the law's block-mass monotonicity attestation).
    """
    if nmax <= 0:
        raise ValueError("nmax must be positive")

    floor = 1e-300
    chunk = 1 << 16
    a = 1.0
    n = -1
    prefix_parts: list[float] = []
    plateaued = False
    while n < nmax:
        m = min(chunk, nmax - n)
        idx = np.arange(n + 1, n + 1 + m, dtype=np.int64)
        cdfs = law.cdf_array(idx)
        if np.any(cdfs <= 0.0):
            j = int(idx[int(np.argmax(cdfs <= 0.0))])
            # terms vanish for every index >= j; the series is a finite sum
            head = a * np.cumprod(cdfs)
            prefix_parts.append(float(np.sum(head)))
            total = math.fsum(prefix_parts)
            return CriterionResult(
                Verdict.PERCOLATES_WITH_POSITIVE_PROB,
                "exact-zero",
                {"zero_at": j, "series_sum": total, "remainder_bound": 0.0},
            )
        prods = a * np.cumprod(cdfs)
        prefix_parts.append(float(np.sum(prods)))
        a = float(prods[-1])
        n += m
        if a < floor:
            break
        if bool(np.all(cdfs >= 1.0)):
            plateaued = True
            break

    prefix_sum = math.fsum(prefix_parts)

    # Divergence certificate: a_inf >= a_n * (1 - sum_{i>n} tail(i)).
    tsb = law.tail_sum_beyond(n)
    limit_lower = a * max(0.0, 1.0 - tsb)
    bounded_exact = law.support_bound is not None and n >= max(law.support_bound - 1, 0)
    if a > 0.0 and (limit_lower >= tol or (bounded_exact and a > 0.0)):
        lower = a if bounded_exact else limit_lower
        return CriterionResult(
            Verdict.NO_PERCOLATION,
            "positive-limit",
            {
                "n": n,
                "a_n": a,
                "limit_lower_bound": lower,
                "plateaued": plateaued,
                "exact": bounded_exact,
            },
        )

    ok, remainder = _certify_tail_sum(law, max(n, 1), a, tol)
    if ok:
        return CriterionResult(
            Verdict.PERCOLATES_WITH_POSITIVE_PROB,
            "tail-sum",
            {"n": n, "series_prefix": prefix_sum, "remainder_bound": remainder},
        )
    return CriterionResult(
        Verdict.INCONCLUSIVE,
        "none",
        {"n": n, "a_n": a, "limit_lower_bound": limit_lower, "remainder_bound": remainder},
    )


def _certify_tail_sum(law: RadiusLaw, n0: int, a0: float, tol: float):
    """Upper-bound sum_{n>n0} a_n by doubling blocks.

    Over the block (m, 2m] every term is <= a_m (monotone), so the block sum
    is <= m * A with A an upper bound for a_m, and
    a_{2m} <= a_m * exp(-m * tail(2m)) since tail is nonincreasing. Once the
    block-to-block ratio 2 exp(-m tail(2m)) is <= 1/2 the remaining blocks are
    geometrically dominated -- valid because the law attests that
    m * tail(2m) is nondecreasing, so the ratio can only shrink.
    """
    if not law.tail_block_mass_monotone:
        return False, math.inf
    m = n0
    upper = a0
    total = 0.0
    for _ in range(200):
        term = m * upper
        block_mass = m * law.tail(2 * m)
        ratio = 2.0 * math.exp(-min(block_mass, 700.0))
        if ratio <= 0.5 and term <= tol / 2.0:
            total += term + term * ratio / (1.0 - ratio)
            return total <= tol, total
        total += term
        upper *= math.exp(-min(block_mass, 700.0))
        m *= 2
        if m > 2**60:
            break
    return False, total


# ======================================================================
# overshoot
# ======================================================================


@dataclass(frozen=True)
class ExactBounded:
    """Truncate at the support bound (exact; bounded laws only)."""


@dataclass(frozen=True)
class TailBudget:
    """Truncate once the residual tail mass is below eps."""

    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"tail budget must be in (0, 1), got {self.eps}")


@dataclass(frozen=True)
class OvershootQuery:
    law: RadiusLaw
    truncation_depth: int
    truncation_error_bound: float

    def __post_init__(self):
        if self.truncation_depth < 0:
            raise ValueError("truncation depth must be nonnegative")
        actual = self.law.tail_sum_beyond(self.truncation_depth)
        if self.truncation_error_bound < actual * (1.0 - 1e-12):
            raise ValueError(
                "truncation error bound "
                f"{self.truncation_error_bound:g} below the actual tail sum {actual:g}"
            )
        kmax = self.law.support_bound
        if kmax is not None and self.truncation_depth >= kmax and self.truncation_error_bound != 0.0:
            raise ValueError("bounded law truncated at/after its support bound must carry bound 0")


def overshoot_query(law: RadiusLaw, policy) -> OvershootQuery:
    """Build an OvershootQuery from a truncation policy."""
    kmax = law.support_bound
    if isinstance(policy, ExactBounded):
        if kmax is None:
            raise ValueError("ExactBounded requires a law with bounded support")
        return OvershootQuery(law, kmax, 0.0)
    if isinstance(policy, TailBudget):
        if kmax is not None:
            return OvershootQuery(law, kmax, 0.0)
        d = 1
        while law.tail_sum_beyond(d) > policy.eps:
            d *= 2
            if d > 2**40:
                raise HeavyTailError(
                    f"cannot meet tail budget {policy.eps:g} for {law.label()}"
                )
        lo = d // 2
        while lo < d:  # smallest depth meeting the budget
            mid = (lo + d) // 2
            if law.tail_sum_beyond(mid) <= policy.eps:
                d = mid
            else:
                lo = mid + 1
        return OvershootQuery(law, d, law.tail_sum_beyond(d))
    raise TypeError(f"unknown depth policy {policy!r}")


@dataclass(frozen=True)
class OvershootCdfResult:
    value: float
    error_bound: float
    exact: bool

    def __float__(self):
        return self.value


def overshoot_cdf(query: OvershootQuery, m: int) -> OvershootCdfResult:
    """P(O <= m) = prod_{i>=0} CDF(m+i), where O is the maximal reach past a
    boundary from the vertices at depths 0, 1, 2, ... behind it.

    Exact for bounded laws (finitely many non-unit factors). For unbounded
    laws the value is a truncated product with error bound
    sum_{i > depth} P(I > m+i). Unbounded laws without a finite mean cannot
    be truncated meaningfully and are rejected, except that a zero factor
    yields an exact 0.
    """
    if m < 0:
        return OvershootCdfResult(0.0, 0.0, True)
    law = query.law
    kmax = law.support_bound
    heavy = kmax is None and law.moment_order_finite <= 1.0
    if heavy:
        if law.cdf(m) == 0.0:
            return OvershootCdfResult(0.0, 0.0, True)
        raise HeavyTailError(
            f"overshoot CDF inconclusive for {law.label()}: no finite mean and no zero factor"
        )
    if kmax is not None:
        top = max(kmax - 1 - m, -1)  # factors with index beyond this are 1
        idx = np.arange(0, top + 1, dtype=np.int64)
        factors = law.cdf_array(m + idx)
        value = 1.0
        for f in factors:
            value *= float(f)
        return OvershootCdfResult(value, 0.0, True)
    idx = np.arange(0, query.truncation_depth + 1, dtype=np.int64)
    factors = law.cdf_array(m + idx)
    value = 1.0
    for f in factors:
        value *= float(f)
        if value == 0.0:
            return OvershootCdfResult(0.0, 0.0, True)
    err = law.tail_sum_beyond(m + query.truncation_depth)
    return OvershootCdfResult(value, err, False)


def overshoot_sample(law: RadiusLaw, rng: np.random.Generator, policy) -> tuple[int, bool]:
    """Sample O = max(0, max_i (I_{-i} - i)) by drawing depths 0..D.

    Certified (exact) when the law is bounded; under a TailBudget policy the
    probability that a deeper vertex would have changed the value is below
    the budget, and certified=False reports that the budget was binding.
    """
    vals, certified = overshoot_sample_many(law, 1, rng, policy)
    return int(vals[0]), certified


def overshoot_sample_many(
    law: RadiusLaw, n: int, rng: np.random.Generator, policy
) -> tuple[np.ndarray, bool]:
    query = overshoot_query(law, policy)
    depth = query.truncation_depth
    certified = law.support_bound is not None
    u = rng.random((n, depth + 1))
    radii = law.quantile_array(u)
    reach = radii - np.arange(depth + 1, dtype=np.int64)[None, :]
    values = np.maximum(reach.max(axis=1), 0)
    return values.astype(np.int64), certified
