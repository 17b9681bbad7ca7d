"""Shared result records for estimators and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["EstimateReport", "CltReport"]


@dataclass(frozen=True)
class EstimateReport:
    """A point estimate with its confidence interval and provenance."""

    quantity: str
    point: float
    ci_low: float
    ci_high: float
    level: float
    replicates: int
    censored: int
    method: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.ci_low <= self.point <= self.ci_high:
            raise ValueError(
                f"interval [{self.ci_low}, {self.ci_high}] does not bracket {self.point}"
            )
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if not 0 <= self.censored <= self.replicates:
            raise ValueError(
                f"censored count {self.censored} exceeds {self.replicates} replicates"
            )

    @property
    def halfwidth(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0

    def to_json_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "level": self.level,
            "replicates": self.replicates,
            "censored": self.censored,
            "method": self.method,
            "extra": self.extra,
        }


@dataclass(frozen=True)
class CltReport:
    """Outcome of a central-limit check on the right-front position."""

    n: int
    m_replicates: int
    mu_hat: float
    psi_hat: float
    ks_distance: float
    ks_critical: float
    mean_z: float
    mu_source: str

    @property
    def ks_ok(self) -> bool:
        return self.ks_distance < self.ks_critical

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "m_replicates": self.m_replicates,
            "mu_hat": self.mu_hat,
            "psi_hat": self.psi_hat,
            "ks_distance": self.ks_distance,
            "ks_critical": self.ks_critical,
            "mean_z": self.mean_z,
            "mu_source": self.mu_source,
        }
