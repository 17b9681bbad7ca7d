"""Batch kernels: per-lane bit-exactness with the single-run engine."""

import numpy as np
import pytest

from rumorline.batch import (
    batch_front_positions,
    batch_one_sided_unit_advance,
    batch_taus,
)
from rumorline.engine import (
    AllOccupied,
    BernoulliSites,
    Horizon,
    MarkovSites,
    UntilExtinct,
    run,
    run_one_sided,
)
from rumorline.laws import Constant, FiniteSupport, Geometric, GeometricMin1
from rumorline.renewal import one_sided_renewal_sample
from rumorline.rng import derive_seed, derive_seed_array

KERNEL_LAWS = [
    FiniteSupport([0.5, 0.0, 0.5]),
    FiniteSupport([0.3, 0.4, 0.3]),
    Geometric(0.5),
    Constant(0),
]
KERNEL_ENVS = [AllOccupied(), BernoulliSites(0.7)]


def lane_seeds(master, n):
    return derive_seed_array(master, "lane", np.arange(n))


def test_derive_seed_array_matches_scalar():
    idx = np.arange(512)
    vec = derive_seed_array(99, "rep", idx)
    ref = np.array([derive_seed(99, "rep", int(i)) for i in idx], dtype=np.uint64)
    assert np.array_equal(vec, ref)
    # string and scalar tags fold identically too
    assert derive_seed_array(7, "a", 3, idx)[5] == derive_seed(7, "a", 3, 5)


@pytest.mark.parametrize("law", KERNEL_LAWS, ids=lambda l: l.label())
@pytest.mark.parametrize("env", KERNEL_ENVS, ids=lambda e: e.record()["kind"])
def test_batch_taus_bit_exact(law, env):
    seeds = lane_seeds(11, 200)
    res = batch_taus(seeds, law, env, horizon=300)
    for i in range(len(seeds)):
        t = run(int(seeds[i]), law, env, UntilExtinct(step_cap=300))
        if t.extinct:
            assert res.tau[i] == t.tau
            assert res.cluster[i] == t.cluster_size
            assert res.final_l[i] == t.ls[-1]
            assert res.final_r[i] == t.rs[-1]
        else:
            assert res.tau[i] == -1
            assert res.censored[i]


def test_batch_taus_censoring_and_survival():
    law = GeometricMin1(0.5)  # never extinct: every lane censors
    seeds = lane_seeds(3, 64)
    res = batch_taus(seeds, law, horizon=16)
    assert res.censored.all()
    assert res.survival(8) == 1.0
    # and a subcritical law decays
    res2 = batch_taus(lane_seeds(4, 4000), FiniteSupport([0.5, 0.0, 0.5]), horizon=64)
    assert res2.survival(0) == 1.0
    assert res2.survival(1) == pytest.approx(0.5, abs=0.03)
    assert res2.survival(5) < res2.survival(1)


@pytest.mark.parametrize("one_sided", [False, True])
def test_batch_front_positions_bit_exact(one_sided):
    law = GeometricMin1(0.5)
    seeds = lane_seeds(13, 80)
    out = batch_front_positions(seeds, law, 50, one_sided=one_sided, history=True)
    runner = run_one_sided if one_sided else run
    for i in range(len(seeds)):
        t = runner(int(seeds[i]), law, stop=Horizon(50))
        assert out["l"][i] == t.ls[-1]
        assert out["r"][i] == t.rs[-1]
        assert np.array_equal(out["r_history"][i], np.asarray(t.rs))


def test_batch_front_positions_freezes_dead_lanes():
    law = FiniteSupport([0.5, 0.0, 0.5])
    seeds = lane_seeds(17, 400)
    out = batch_front_positions(seeds, law, 40)
    dead = out["tau"] >= 0
    assert dead.any()
    for i in np.flatnonzero(dead)[:50]:
        t = run(int(seeds[i]), law, stop=UntilExtinct(step_cap=40))
        assert out["tau"][i] == t.tau
        assert out["l"][i] == t.ls[-1]
        assert out["r"][i] == t.rs[-1]


def test_batch_front_positions_bernoulli_environment():
    law = Geometric(0.7)
    env = BernoulliSites(0.6)
    seeds = lane_seeds(19, 60)
    out = batch_front_positions(seeds, law, 30, env_spec=env)
    for i in range(len(seeds)):
        t = run(int(seeds[i]), law, env, Horizon(30))
        assert out["l"][i] == t.ls[-1]
        assert out["r"][i] == t.rs[-1]


def test_batch_one_sided_unit_advance_bit_exact():
    law = GeometricMin1(0.5)
    seeds = lane_seeds(23, 120)
    gam, rg = batch_one_sided_unit_advance(seeds, law, step_cap=200)
    for i in range(len(seeds)):
        got = one_sided_renewal_sample(int(seeds[i]), law, step_cap=200)
        if got is None:
            assert gam[i] == -1
        else:
            assert (gam[i], rg[i]) == got


def test_batch_one_sided_unit_advance_censors():
    # Constant(2) advances by 2 every step: no unit advance ever occurs.
    gam, rg = batch_one_sided_unit_advance(lane_seeds(5, 8), Constant(2), step_cap=50)
    assert (gam == -1).all()
    assert (rg == -1).all()


def test_markov_environment_rejected():
    with pytest.raises(TypeError):
        batch_taus(lane_seeds(1, 4), Constant(1), MarkovSites(0.3, 0.8), horizon=8)
    with pytest.raises(TypeError):
        batch_front_positions(lane_seeds(1, 4), Constant(1), 8, env_spec=MarkovSites(0.3, 0.8))


def test_batch_taus_large_anchor():
    # exact values: P(tau = 1) = 0.5, P(tau = 2) = 1/32, P(M = 5) = 1/32
    law = FiniteSupport([0.5, 0.0, 0.5])
    res = batch_taus(lane_seeds(2024, 200_000), law, horizon=512)
    assert not res.censored.any()
    n = len(res.tau)
    assert np.mean(res.tau == 1) == pytest.approx(0.5, abs=4 * 0.5 / n**0.5)
    assert np.mean(res.tau == 2) == pytest.approx(1 / 32, abs=4 * 0.2 / n**0.5)
    assert np.mean(res.cluster == 5) == pytest.approx(1 / 32, abs=4 * 0.2 / n**0.5)
