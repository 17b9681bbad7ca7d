"""rumorline: rumour percolation on the integer line.

Simulation engines (basic, one-sided, site-diluted, reactivated), exact
small-instance oracles, renewal detection, and Monte Carlo estimators, all
driven by counter-based keyed randomness for reproducible couplings.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .laws import (
    Constant,
    FiniteSupport,
    Geometric,
    GeometricMin1,
    PolynomialTail,
    Verdict,
    containment_probability,
    percolation_criterion,
    overshoot_cdf,
    overshoot_query,
    overshoot_sample,
)
from .rng import KeyedStream, derive_seed

__all__ = [
    "__version__",
    "Constant",
    "Geometric",
    "GeometricMin1",
    "PolynomialTail",
    "FiniteSupport",
    "Verdict",
    "containment_probability",
    "percolation_criterion",
    "overshoot_cdf",
    "overshoot_query",
    "overshoot_sample",
    "KeyedStream",
    "derive_seed",
]
