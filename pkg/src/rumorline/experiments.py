"""Experiment orchestration: one config in, one artifact directory out.

Every run writes the same trio — manifest.json (config hash, seed, versions,
wall time), report.json (the numbers), and zero or more long-format data CSVs
whose first line pins the config hash. Replicate i always draws from the
stream keyed (masterSeed, purpose, i), so how replicates are split across
workers cannot change a single value; workers only decide who computes which
contiguous chunk, and aggregation reassembles chunks in index order.
"""

from __future__ import annotations

import json
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .batch import batch_front_positions
from .config import (
    CltConfig,
    CriterionConfig,
    ExperimentConfig,
    OracleConfig,
    ProbeConfig,
    ReactConfig,
    SimulateConfig,
    SpeedConfig,
    SurvivalConfig,
    config_hash,
)
from .engine import AllOccupied, Horizon, init, run, step, step_reference
from .estimators import clt_check, speed_lln, survival_tail, wls_log_fit
from .laws import percolation_criterion
from .oracles import (
    EnumerationSpec,
    exact_cluster_distribution,
    exact_overshoot_distribution,
    exact_tau_distribution,
)
from .reactivation import (
    batch_probe_domination,
    check_standing_assumptions,
    drift_theta,
    react_front_positions,
)
from .renewal import renewal_speed_estimate
from .rng import derive_seed, derive_seed_array

__all__ = ["ExperimentResult", "InvariantViolation", "run_experiment", "resolve_workers"]

WORKERS_ENV_VAR = "RUMORLINE_WORKERS"


class InvariantViolation(RuntimeError):
    """A mid-run consistency check failed; the artifacts cannot be trusted."""


@dataclass(frozen=True)
class ExperimentResult:
    out_dir: Path
    report: dict
    manifest: dict


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    if workers < 1:
        raise ValueError(f"worker count must be positive, got {workers}")
    return workers


def _map_chunks(items: np.ndarray, workers: int, fn):
    """Apply fn to contiguous chunks of items, reassembled in chunk order."""
    chunks = [c for c in np.array_split(items, min(workers, items.size)) if c.size]
    if len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(fn, chunks))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: str, rows, cfg_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config={cfg_hash[:12]}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


# ----------------------------------------------------------------------
# per-kind handlers: return (report payload, [(filename, header, rows)])
# ----------------------------------------------------------------------


def _verify_contiguity(seed: int, law, env_spec, steps: int) -> None:
    """Differential check of the interval stepper against the literal
    set dynamics for one replicate's opening steps."""
    state, env = init(seed, env_spec)
    ref_env = env_spec.bind(seed)
    heard, active = {0}, {0}
    for _ in range(steps):
        if state.extinct:
            if active:
                raise InvariantViolation(
                    f"seed {seed}: interval engine died, set reference did not"
                )
            return
        if heard != set(range(state.l, state.r + 1)) or active != set(
            state.active_vertices()
        ):
            raise InvariantViolation(
                f"seed {seed}, step {state.n}: contiguity differential mismatch"
            )
        heard, active = step_reference(heard, active, law, ref_env, seed)
        state = step(state, law, env, seed)


def _run_simulate(cfg: SimulateConfig, workers: int):
    law = cfg.law.build()
    env = cfg.env.build()
    seeds = derive_seed_array(cfg.seed, "replicate", np.arange(cfg.replicates))

    def one_chunk(chunk):
        out = []
        for s in chunk:
            if cfg.verify:
                _verify_contiguity(int(s), law, env, min(cfg.horizon, 24))
            out.append(run(int(s), law, env, Horizon(cfg.horizon)))
        return out

    trajs = [t for part in _map_chunks(seeds, workers, one_chunk) for t in part]
    rows = [
        (i, n, l, r, a)
        for i, t in enumerate(trajs)
        for n, l, r, a in zip(t.ns, t.ls, t.rs, t.active_counts)
    ]
    taus = [t.tau for t in trajs if t.extinct]
    clusters = [t.cluster_size for t in trajs if t.extinct]
    payload = {
        "replicates": cfg.replicates,
        "horizon": cfg.horizon,
        "verified_contiguity": cfg.verify,
        "extinct": len(taus),
        "mean_tau_extinct": (sum(taus) / len(taus)) if taus else None,
        "mean_cluster_extinct": (sum(clusters) / len(clusters)) if clusters else None,
    }
    return payload, [("trajectories.csv", "replicate,n,l,r,active_count", rows)]


def _run_survival(cfg: SurvivalConfig, workers: int):
    res = survival_tail(
        cfg.law.build(), cfg.ns, cfg.replicates,
        env=cfg.env.build(), seed=cfg.seed, level=cfg.level,
    )
    rows = list(zip(res.ns, res.p_hat, res.ci_low, res.ci_high))
    return res.to_json_dict(), [("survival.csv", "n,p_hat,ci_low,ci_high", rows)]


def _run_speed(cfg: SpeedConfig, workers: int):
    law = cfg.law.build()
    env = cfg.env.build()
    lln = speed_lln(
        law, cfg.n_steps, replicates=cfg.replicates, env=env,
        seed=cfg.seed, level=cfg.level,
    )
    payload = {"lln": lln.to_json_dict(), "n_steps": cfg.n_steps}
    if isinstance(env, AllOccupied):
        ren = renewal_speed_estimate(
            law, derive_seed(cfg.seed, "speed-renewal"),
            n_pairs=cfg.increments, horizon=cfg.pool_horizon, level=cfg.level,
        )
        payload["renewal"] = ren.to_json_dict()
        payload["intervals_overlap"] = bool(
            lln.ci_low <= ren.ci_high and ren.ci_low <= lln.ci_high
        )
    else:
        payload["renewal"] = None
        payload["renewal_skipped"] = "regeneration theory needs the fully occupied lattice"
    seeds = derive_seed_array(cfg.seed, "lln-path", np.arange(cfg.replicates))
    rs = batch_front_positions(seeds, law, cfg.n_steps, env_spec=env)["r"]
    rows = [(i, int(r), r / cfg.n_steps) for i, r in enumerate(rs)]
    return payload, [("speeds.csv", "replicate,r_n,mu_hat", rows)]


def _run_clt(cfg: CltConfig, workers: int):
    law = cfg.law.build()
    rep = clt_check(
        law, cfg.n, cfg.replicates, mu_source=cfg.mu_source,
        mu_value=cfg.mu_value, mu_pairs=cfg.mu_pairs, seed=cfg.seed,
        alpha=cfg.alpha, lilliefors=cfg.lilliefors,
    )
    seeds = derive_seed_array(cfg.seed, "clt-path", np.arange(cfg.replicates))
    rs = batch_front_positions(seeds, law, cfg.n)["r"].astype(np.float64)
    z = (rs - cfg.n * rep.mu_hat) / np.sqrt(cfg.n)
    rows = [(i, float(v)) for i, v in enumerate(z)]
    payload = {**rep.to_json_dict(), "ks_ok": rep.ks_ok, "alpha": cfg.alpha}
    return payload, [("zscores.csv", "replicate,z", rows)]


def _run_react(cfg: ReactConfig, workers: int):
    law = cfg.law.build()
    notes = check_standing_assumptions(law, cfg.p2)
    speed = speed_lln(
        law, cfg.n_steps, replicates=cfg.replicates, p2=cfg.p2,
        seed=cfg.seed, window=cfg.window, level=cfg.level,
    )
    theta = drift_theta(law, cfg.p2)
    payload = {
        "speed": speed.to_json_dict(),
        "theta": theta,
        "speed_ci_within_drift_band": bool(theta <= speed.ci_low and speed.ci_high <= 1.0),
        "assumption_notes": notes,
        "p2": cfg.p2,
        "n_steps": cfg.n_steps,
    }
    seeds = derive_seed_array(cfg.seed, "lln-path", np.arange(cfg.replicates))
    out = react_front_positions(seeds, law, cfg.n_steps, p2=cfg.p2, window=cfg.window)
    rows = [(i, int(r), r / cfg.n_steps) for i, r in enumerate(out["r"])]
    payload["window_certified"] = bool(out["certified"])
    payload["window_error_budget"] = float(out["error_budget"])
    return payload, [("fronts.csv", "replicate,r_n,mu_hat", rows)]


def _run_criterion(cfg: CriterionConfig, workers: int):
    kwargs = {}
    if cfg.nmax is not None:
        kwargs["nmax"] = cfg.nmax
    if cfg.tol is not None:
        kwargs["tol"] = cfg.tol
    res = percolation_criterion(cfg.law.build(), **kwargs)
    payload = {
        "verdict": res.verdict.value,
        "certificate": res.certificate,
        "detail": res.detail,
    }
    return payload, []


def _run_oracle(cfg: OracleConfig, workers: int):
    law = cfg.law.build()
    spec = EnumerationSpec(law, cfg.horizon)
    tau = exact_tau_distribution(spec)
    cluster = exact_cluster_distribution(spec)
    payload = {
        "horizon": cfg.horizon,
        "tau": {str(k): v for k, v in sorted(tau.tau.items())},
        "cluster": {str(k): v for k, v in sorted(cluster.cluster_size.items())},
        "censored_mass": tau.censored_mass,
    }
    rows = [("tau", k, v) for k, v in sorted(tau.tau.items())]
    rows += [("cluster", k, v) for k, v in sorted(cluster.cluster_size.items())]
    if cfg.include_overshoot:
        ov = exact_overshoot_distribution(law)
        payload["overshoot"] = {str(k): v for k, v in sorted(ov.items())}
        rows += [("overshoot", k, v) for k, v in sorted(ov.items())]
    return payload, [("oracle.csv", "quantity,value,probability", rows)]


def _run_probe(cfg: ProbeConfig, workers: int):
    law = cfg.law.build()
    notes = check_standing_assumptions(law, cfg.p2)
    seeds = derive_seed_array(cfg.seed, "probe", np.arange(cfg.replicates))

    def one_chunk(chunk):
        return batch_probe_domination(
            chunk, law, cfg.p2, cfg.horizon, us=cfg.u, window=cfg.window,
        )

    betas = np.concatenate(_map_chunks(seeds, workers, one_chunk))
    failed = betas >= 0
    rows = [
        (i, cfg.u, "Failed" if f else "DominatedThrough", int(b) if f else None)
        for i, (f, b) in enumerate(zip(failed, betas))
    ]
    # tail of the *finite* failure times: probes that stay dominated through
    # the horizon carry no mass here, so the curve decays to zero instead of
    # flattening at the domination probability
    ns = np.arange(cfg.fit_min_n, cfg.horizon + 1)
    fin = betas[failed]
    surv = np.array([(fin > n).sum() for n in ns])
    s_hat = surv / cfg.replicates
    fit = wls_log_fit(ns, s_hat, cfg.replicates)
    payload = {
        "probes": cfg.replicates,
        "u": cfg.u,
        "horizon": cfg.horizon,
        "failed": int(failed.sum()),
        "failure_rate": float(failed.mean()),
        "fit_min_n": cfg.fit_min_n,
        "tail_fit": fit.to_json_dict(),
        "tail_definition": "share of probes failing after step n (within horizon)",
        "assumption_notes": notes,
    }
    return payload, [("probes.csv", "probe,u,outcome,betaR", rows)]


_HANDLERS = {
    SimulateConfig: _run_simulate,
    SurvivalConfig: _run_survival,
    SpeedConfig: _run_speed,
    CltConfig: _run_clt,
    ReactConfig: _run_react,
    CriterionConfig: _run_criterion,
    OracleConfig: _run_oracle,
    ProbeConfig: _run_probe,
}


def run_experiment(cfg: ExperimentConfig, out: Optional[str] = None,
                   workers: Optional[int] = None) -> ExperimentResult:
    """Execute one experiment and persist its artifact directory.

    Raises InvariantViolation when a mid-run consistency check fails; the
    CLI maps that to a nonzero exit."""
    workers = resolve_workers(workers)
    cfg_hash = config_hash(cfg)
    out_dir = Path(out or cfg.out or f"rumorline-{cfg.kind}-{cfg_hash[:12]}")
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    payload, artifacts = _HANDLERS[type(cfg)](cfg, workers)
    wall = time.perf_counter() - t0

    report = {"kind": cfg.kind, "config_hash": cfg_hash, **payload}
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, header, rows in artifacts:
        _write_csv(out_dir / name, header, rows, cfg_hash)

    manifest = {
        "config_hash": cfg_hash,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "versions": {
            "rumorline": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "workers": workers,
        "wall_time_s": wall,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "artifacts": ["report.json"] + [name for name, _, _ in artifacts],
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExperimentResult(out_dir=out_dir, report=report, manifest=manifest)
