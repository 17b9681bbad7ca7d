"""Experiment configuration: a validated record per run, hashed for provenance.

Configs arrive as YAML (or any mapping), carry a `kind` tag naming the
experiment, and validate everything up front — the parser reports the full
list of problems, not just the first. Law and environment specs are tagged
records and also accept the flat text form ``kind=geometric q=0.5``.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Annotated, List, Literal, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    TypeAdapter,
    ValidationError,
    field_validator,
    model_validator,
)

from .engine import AllOccupied, BernoulliSites, MarkovSites
from .laws import Constant, FiniteSupport, Geometric, GeometricMin1, PolynomialTail
from .oracles import MAX_HORIZON

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "config_hash",
    "EXPERIMENT_KINDS",
]


class ConfigError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# ----------------------------------------------------------------------
# law and environment specs
# ----------------------------------------------------------------------

_LAW_ALIASES = {
    "finite": "finite_support",
    "polynomial": "polynomial_tail",
    "geometric-min1": "geometric_min1",
}
_ENV_ALIASES = {
    "all": "all_occupied",
    "bernoulli": "bernoulli_sites",
    "markov": "markov_sites",
}


def _parse_flat_record(text: str) -> dict:
    """'kind=finite pmf=[0.5,0,0.5]' -> {'kind': 'finite', 'pmf': [...]}."""
    rec = {}
    for token in text.split():
        key, sep, raw = token.partition("=")
        if not sep or not key:
            raise ValueError(f"expected key=value tokens, got {token!r}")
        try:
            rec[key] = json.loads(raw)
        except json.JSONDecodeError:
            rec[key] = raw
    return rec


def _normalize_record(value, aliases: dict):
    if isinstance(value, str):
        value = _parse_flat_record(value)
    if isinstance(value, dict) and value.get("kind") in aliases:
        value = {**value, "kind": aliases[value["kind"]]}
    return value


class _ConstantLaw(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["constant"]
    c: int = Field(ge=0)

    def build(self):
        return Constant(self.c)


class _GeometricLaw(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["geometric"]
    q: float = Field(gt=0.0, lt=1.0)

    def build(self):
        return Geometric(self.q)


class _GeometricMin1Law(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["geometric_min1"]
    q: float = Field(gt=0.0, lt=1.0)

    def build(self):
        return GeometricMin1(self.q)


class _PolynomialTailLaw(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["polynomial_tail"]
    alpha: float
    c: float = Field(gt=0.0, le=1.0)

    @field_validator("alpha")
    @classmethod
    def _alpha_positive(cls, v):
        if v <= 0:
            raise ValueError(f"alpha must be positive, got {v:g}")
        return v

    def build(self):
        return PolynomialTail(self.alpha, self.c)


class _FiniteSupportLaw(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["finite_support"]
    pmf: List[float] = Field(min_length=1)

    @field_validator("pmf")
    @classmethod
    def _pmf_is_a_distribution(cls, v):
        if any(not 0.0 <= p <= 1.0 for p in v):
            raise ValueError("pmf entries must be probabilities in [0, 1]")
        total = math.fsum(v)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf mass {total:g}")
        return v

    def build(self):
        return FiniteSupport(self.pmf)


LawSpec = Annotated[
    Union[_ConstantLaw, _GeometricLaw, _GeometricMin1Law,
          _PolynomialTailLaw, _FiniteSupportLaw],
    Field(discriminator="kind"),
]


class _AllOccupiedEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["all_occupied"]

    def build(self):
        return AllOccupied()


class _BernoulliSitesEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["bernoulli_sites"]
    p_occ: float = Field(gt=0.0, le=1.0)

    def build(self):
        return BernoulliSites(self.p_occ)


class _MarkovSitesEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["markov_sites"]
    p00: float = Field(ge=0.0, lt=1.0)
    p11: float = Field(ge=0.0, lt=1.0)

    def build(self):
        return MarkovSites(self.p00, self.p11)


EnvSpec = Annotated[
    Union[_AllOccupiedEnv, _BernoulliSitesEnv, _MarkovSitesEnv],
    Field(discriminator="kind"),
]

_DEFAULT_ENV = {"kind": "all_occupied"}


# ----------------------------------------------------------------------
# experiment kinds
# ----------------------------------------------------------------------


class _ExperimentBase(BaseModel):
    model_config = ConfigDict(extra="forbid")
    law: LawSpec
    seed: int = Field(default=0, ge=0, lt=2**64)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    out: Optional[str] = None

    @field_validator("law", mode="before")
    @classmethod
    def _law_records(cls, v):
        return _normalize_record(v, _LAW_ALIASES)


class _WithEnvironment(_ExperimentBase):
    env: EnvSpec = Field(default_factory=lambda: _AllOccupiedEnv(**_DEFAULT_ENV))

    @field_validator("env", mode="before")
    @classmethod
    def _env_records(cls, v):
        return _normalize_record(v, _ENV_ALIASES)


class SimulateConfig(_WithEnvironment):
    """Raw trajectories of the basic model, long-format CSV."""

    kind: Literal["simulate"]
    horizon: int = Field(default=256, ge=1)
    replicates: int = Field(default=1, ge=1)
    verify: bool = False  # differential contiguity check against the set engine


class SurvivalConfig(_WithEnvironment):
    """Extinction-time survival curve on a grid of steps."""

    kind: Literal["survival"]
    replicates: int = Field(default=100_000, ge=2)
    ns: Optional[List[int]] = None

    @model_validator(mode="after")
    def _fill_grid(self):
        if self.ns is None:
            self.ns = list(range(1, 26))
        if not self.ns or any(n < 0 for n in self.ns):
            raise ValueError("ns must be a nonempty list of nonnegative steps")
        return self


class SpeedConfig(_WithEnvironment):
    """Front speed two ways: path averages and regeneration increments."""

    kind: Literal["speed"]
    n_steps: int = Field(default=4096, ge=2)
    replicates: int = Field(default=32, ge=2)
    increments: int = Field(default=20_000, ge=1)
    pool_horizon: int = Field(default=2048, ge=8)


class CltConfig(_ExperimentBase):
    """Gaussian check on the centered, scaled right front."""

    kind: Literal["clt"]
    n: int = Field(default=2000, ge=2)
    replicates: int = Field(default=2000, ge=10)
    mu_source: Literal["renewal", "lln", "fixed"] = "renewal"
    mu_value: Optional[float] = None
    mu_pairs: int = Field(default=1_000_000, ge=100)
    alpha: float = Field(default=0.01, gt=0.0, lt=1.0)
    lilliefors: bool = False

    @model_validator(mode="after")
    def _fixed_needs_value(self):
        if self.mu_source == "fixed" and self.mu_value is None:
            raise ValueError("mu_source 'fixed' requires mu_value")
        return self


class ReactConfig(_ExperimentBase):
    """Reactivated-front speed against the drift floor."""

    kind: Literal["react"]
    p2: float = Field(ge=0.0, le=1.0)
    n_steps: int = Field(default=100_000, ge=2)
    replicates: int = Field(default=32, ge=2)
    window: Optional[int] = Field(default=None, ge=1)


class CriterionConfig(_ExperimentBase):
    """Percolation verdict from the containment-probability series."""

    kind: Literal["criterion"]
    nmax: Optional[int] = Field(default=None, ge=4)
    tol: Optional[float] = Field(default=None, gt=0.0)


class OracleConfig(_ExperimentBase):
    """Exact enumerated distributions for small horizons."""

    kind: Literal["oracle"]
    horizon: int = Field(default=2, ge=1, le=MAX_HORIZON)
    include_overshoot: bool = True


class ProbeConfig(_ExperimentBase):
    """Domination probes of the restart-from-the-front event."""

    kind: Literal["probe"]
    p2: float = Field(ge=0.0, le=1.0)
    u: int = 0
    horizon: int = Field(default=500, ge=1)
    replicates: int = Field(default=100_000, ge=1)
    window: Optional[int] = Field(default=None, ge=1)
    # first step included in the tail fit; raising it skips the
    # pre-asymptotic transient at the start of the failure-time curve
    fit_min_n: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _fit_window_nonempty(self):
        if self.fit_min_n > self.horizon:
            raise ValueError("fit_min_n must not exceed horizon")
        return self


ExperimentConfig = Union[
    SimulateConfig, SurvivalConfig, SpeedConfig, CltConfig,
    ReactConfig, CriterionConfig, OracleConfig, ProbeConfig,
]

EXPERIMENT_KINDS = (
    "simulate", "survival", "speed", "clt", "react", "criterion", "oracle", "probe",
)

_ADAPTER = TypeAdapter(
    Annotated[ExperimentConfig, Field(discriminator="kind")]
)


# ----------------------------------------------------------------------
# parsing and hashing
# ----------------------------------------------------------------------


def _format_errors(exc: ValidationError) -> list:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"]
        out.append(f"{loc}: {msg}" if loc else msg)
    return out


def parse_config(text: str, default_kind: Optional[str] = None) -> ExperimentConfig:
    """Validate a YAML experiment description, reporting every problem.

    default_kind fills a missing `kind` (the CLI passes its subcommand); a
    kind present in the text must then agree with it.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"not parseable as YAML: {exc}"]) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping of keys to values"])
    if default_kind is not None:
        stated = data.get("kind")
        if stated is not None and stated != default_kind:
            raise ConfigError(
                [f"config says kind={stated!r} but the subcommand is {default_kind!r}"]
            )
        data = {**data, "kind": default_kind}
    try:
        cfg = _ADAPTER.validate_python(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc
    if isinstance(cfg, (ReactConfig, ProbeConfig)):
        from .reactivation import check_standing_assumptions

        check_standing_assumptions(cfg.law.build(), cfg.p2)
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that determines the numbers (output paths do not)."""
    canon = cfg.model_dump(mode="json", exclude={"out"})
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
