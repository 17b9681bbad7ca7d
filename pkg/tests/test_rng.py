"""Keyed randomness: determinism, scalar/vector agreement, stream splitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rumorline.rng import (
    CH_CLOCK,
    CH_RADIUS,
    CH_STEP_RADIUS,
    KeyedStream,
    derive_seed,
    keyed_hash,
    keyed_hash_array,
    keyed_uniform,
    keyed_uniform_array,
)

U64 = st.integers(min_value=0, max_value=(1 << 64) - 1)
I48 = st.integers(min_value=-(1 << 48), max_value=1 << 48)


@given(U64, st.integers(1, 8), I48, I48)
@settings(max_examples=200)
def test_scalar_hash_is_pure_and_in_range(seed, ch, a, b):
    h1 = keyed_hash(seed, ch, a, b)
    h2 = keyed_hash(seed, ch, a, b)
    assert h1 == h2
    assert 0 <= h1 < (1 << 64)
    u = keyed_uniform(seed, ch, a, b)
    assert 0.0 <= u < 1.0


@given(U64, st.integers(1, 8), st.lists(I48, min_size=1, max_size=50), I48)
@settings(max_examples=100)
def test_vector_path_matches_scalar_path(seed, ch, keys, b):
    ks = np.asarray(keys, dtype=np.int64)
    hv = keyed_hash_array(seed, ch, ks, b)
    hs = np.array([keyed_hash(seed, ch, int(a), b) for a in keys], dtype=np.uint64)
    assert np.array_equal(hv, hs)
    uv = keyed_uniform_array(seed, ch, ks, b)
    us = np.array([keyed_uniform(seed, ch, int(a), b) for a in keys])
    assert np.array_equal(uv, us)


def test_channels_and_keys_decorrelate():
    seed = 0xDEADBEEF
    ks = np.arange(1000)
    u_rad = keyed_uniform_array(seed, CH_RADIUS, ks)
    u_clk = keyed_uniform_array(seed, CH_CLOCK, ks)
    u_step = keyed_uniform_array(seed, CH_STEP_RADIUS, ks, 3)
    assert not np.array_equal(u_rad, u_clk)
    assert not np.array_equal(u_rad, u_step)
    # crude independence sanity: empirical correlation near zero
    for other in (u_clk, u_step):
        r = np.corrcoef(u_rad, other)[0, 1]
        assert abs(r) < 0.15


def test_negative_keys_are_distinct_from_positive():
    seed = 7
    left = keyed_uniform_array(seed, CH_RADIUS, -np.arange(1, 100))
    right = keyed_uniform_array(seed, CH_RADIUS, np.arange(1, 100))
    assert not np.array_equal(left, right)


def test_uniforms_look_uniform():
    u = keyed_uniform_array(12345, CH_RADIUS, np.arange(200000))
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(np.mean(u < 0.25) - 0.25) < 0.01


def test_derive_seed_order_and_tag_sensitivity():
    s = 42
    assert derive_seed(s, 1, 2) != derive_seed(s, 2, 1)
    assert derive_seed(s, "radius") != derive_seed(s, "clock")
    assert derive_seed(s, 1) != derive_seed(s + 1, 1)
    # derivation is stable across calls
    assert derive_seed(s, "a", 3) == derive_seed(s, "a", 3)


def test_derive_seed_rejects_bad_tags():
    with pytest.raises(TypeError):
        derive_seed(1, 2.5)


def test_keyed_stream_children_and_generator():
    root = KeyedStream(2024)
    c1 = root.child("rep", 0)
    c2 = root.child("rep", 1)
    assert c1.seed != c2.seed
    assert c1.seed == KeyedStream(2024).child("rep", 0).seed
    g1 = c1.generator().random(5)
    g2 = KeyedStream(2024).child("rep", 0).generator().random(5)
    assert np.array_equal(g1, g2)


def test_broadcasting_matches_row_wise_calls():
    seeds = np.arange(4)[:, None]
    keys = np.arange(6)[None, :]
    m = keyed_uniform_array(seeds, CH_CLOCK, keys)
    assert m.shape == (4, 6)
    for i in range(4):
        assert np.array_equal(m[i], keyed_uniform_array(i, CH_CLOCK, np.arange(6)))
