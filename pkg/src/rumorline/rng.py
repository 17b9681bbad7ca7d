"""Counter-based keyed randomness.

Every random quantity in the library is a pure function of a 64-bit seed and a
small integer key: ``uniform(seed, channel, a, b)``. Nothing is consumed from a
stateful stream, so two co-evolving processes that consult the same
(step, vertex) key always see the same value regardless of evaluation order.
That property is what makes the couplings and domination probes well defined,
and it lets the vectorized replicate kernels reproduce the per-replicate
engine bit for bit.

The hash is a splitmix64-style finalizer chained over the key words. Scalar
(pure Python) and vectorized (numpy uint64) paths are kept in lockstep and are
asserted identical by a property test.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "CH_RADIUS",
    "CH_SITE",
    "CH_STEP_RADIUS",
    "CH_CLOCK",
    "CH_DRAW",
    "keyed_hash",
    "keyed_uniform",
    "keyed_uniform_array",
    "derive_seed",
    "derive_seed_array",
    "KeyedStream",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_U53 = float(2.0**-53)

# Channel tags. The channel is part of the key, so draws on different
# channels never collide even for the same (a, b).
CH_RADIUS = 1  # static radius field, keyed by vertex (basic model)
CH_SITE = 2  # site occupancy, keyed by vertex
CH_STEP_RADIUS = 3  # per-step radius field I^n_v, keyed by (step, vertex)
CH_CLOCK = 4  # reactivation clocks B^n_v, keyed by (step, vertex)
CH_DRAW = 5  # sequential draws, keyed by a running counter


def _mix(z: int) -> int:
    """Scalar splitmix64 finalizer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK64
    return z ^ (z >> 31)


def keyed_hash(seed: int, channel: int, a: int = 0, b: int = 0) -> int:
    """64-bit hash of (seed, channel, a, b). Pure; negative a/b allowed."""
    h = seed & _MASK64
    h = _mix(h ^ ((channel * _GAMMA) & _MASK64))
    h = _mix(h ^ ((a * _GAMMA) & _MASK64))
    h = _mix(h ^ ((b * _GAMMA) & _MASK64))
    return h


def keyed_uniform(seed: int, channel: int, a: int = 0, b: int = 0) -> float:
    """Uniform in [0, 1) derived from the keyed hash (53 mantissa bits)."""
    return (keyed_hash(seed, channel, a, b) >> 11) * _U53


def _as_u64(x) -> np.ndarray:
    # Two's-complement wrap matches the scalar path's `& _MASK64`. Accepts
    # signed arrays (vertex indices) and full-range unsigned seeds; always
    # returns at least 1-d so every op below is an array op (scalar numpy
    # ops would warn on intended modular wraparound).
    arr = np.atleast_1d(np.asarray(x))
    if arr.dtype.kind == "u":
        return arr.astype(np.uint64, copy=False)
    if arr.dtype.kind == "i":
        return arr.astype(np.int64, copy=False).astype(np.uint64)
    raise TypeError(f"keys must be integers, got dtype {arr.dtype}")


def keyed_hash_array(seed, channel: int, a, b=0) -> np.ndarray:
    """Vectorized keyed_hash. `seed`, `a`, `b` broadcast; returns uint64."""
    gamma = np.uint64(_GAMMA)
    h = _as_u64(seed)
    h = _mix_array(h ^ np.uint64((channel * _GAMMA) & _MASK64))
    h = _mix_array(h ^ (_as_u64(a) * gamma))
    h = _mix_array(h ^ (_as_u64(b) * gamma))
    return h


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def keyed_uniform_array(seed, channel: int, a, b=0) -> np.ndarray:
    """Vectorized keyed_uniform; float64 in [0, 1)."""
    h = keyed_hash_array(seed, channel, a, b)
    return (h >> np.uint64(11)).astype(np.float64) * _U53


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    if isinstance(tag, str):
        digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big")
    raise TypeError(f"seed tag must be int or str, got {type(tag).__name__}")


def derive_seed(seed: int, *tags) -> int:
    """Split a seed by a sequence of tags (ints or strings).

    Used for (masterSeed, replicateIndex, purposeTag) style derivation so
    replicate streams are independent of scheduling order.
    """
    h = seed & _MASK64
    for tag in tags:
        h = _mix(h ^ ((_tag_to_int(tag) * _GAMMA + _GAMMA) & _MASK64))
    return h


def derive_seed_array(seed, *tags) -> np.ndarray:
    """Vectorized derive_seed: tags may be integer arrays (they broadcast) or
    scalars/strings; elementwise identical to the scalar path."""
    gamma = np.uint64(_GAMMA)
    h = _as_u64(seed)
    for tag in tags:
        if isinstance(tag, np.ndarray):
            h = _mix_array(h ^ (_as_u64(tag) * gamma + gamma))
        else:
            folded = (_tag_to_int(tag) * _GAMMA + _GAMMA) & _MASK64
            h = _mix_array(h ^ np.uint64(folded))
    return h


class KeyedStream:
    """A seed wrapper with keyed-draw helpers and child derivation."""

    __slots__ = ("seed",)

    def __init__(self, seed: int):
        self.seed = seed & _MASK64

    def uniform(self, channel: int, a: int = 0, b: int = 0) -> float:
        return keyed_uniform(self.seed, channel, a, b)

    def uniform_array(self, channel: int, a, b=0) -> np.ndarray:
        return keyed_uniform_array(self.seed, channel, a, b)

    def child(self, *tags) -> "KeyedStream":
        return KeyedStream(derive_seed(self.seed, *tags))

    def generator(self) -> np.random.Generator:
        """A numpy Generator for bulk unkeyed draws (shuffles, i.i.d. batches)."""
        return np.random.default_rng(derive_seed(self.seed, "np-generator"))

    def __repr__(self) -> str:  # pragma: no cover
        return f"KeyedStream(seed=0x{self.seed:016x})"
