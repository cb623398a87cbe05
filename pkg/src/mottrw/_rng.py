"""Deterministic, index-keyed random streams.

Every random quantity in the package is a pure function of a user seed plus a
structural key (stream tag, block index, replica number, ...).  Environments can
therefore be regenerated for any window without storing state, and extending a
window reproduces previously returned values bit for bit.

Two layers:

* ``mix64`` / ``substream`` — hash a tuple of integers into a 64-bit key and open
  an independent ``numpy`` generator for it.
* ``block_values`` / ``uniform_field`` — an unbounded i.i.d. field ``v[k]`` over
  integer indices ``k`` (negative allowed), materialised block by block so that
  ``v[k]`` depends only on ``(seed, tag, k)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

_MASK64 = (1 << 64) - 1

#: Block length for index-keyed fields.  Any window is covered by whole blocks,
#: so regenerating a larger window reproduces the smaller one exactly.
BLOCK = 4096

# Stream tags (arbitrary distinct constants; stable across versions).
TAG_GAP = 0x6761_7073
TAG_MARK = 0x6D61_726B
TAG_CHAIN = 0x6368_6169
TAG_WALK = 0x7761_6C6B
TAG_CLOCK = 0x636C_6F63
TAG_COIN = 0x636F_696E


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Hash a tuple of (possibly negative) integers to a 64-bit key."""
    h = 0x8B72E7ED76B85A9D
    for p in parts:
        h ^= p & _MASK64
        _, h = splitmix64(h)
    return h


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) tuple."""
    return np.random.default_rng(np.random.SeedSequence(mix64(seed, *key)))


def block_values(
    seed: int,
    tag: int,
    lo: int,
    hi: int,
    fill: Callable[[np.random.Generator, int], np.ndarray],
) -> np.ndarray:
    """Values ``v[lo:hi]`` of the i.i.d. field keyed by ``(seed, tag)``.

    ``fill(rng, n)`` must return ``n`` i.i.d. draws.  ``v[k]`` is a pure function
    of ``(seed, tag, k)``: the field is generated in fixed blocks of ``BLOCK``
    indices, each from its own substream, so any two overlapping windows agree
    exactly on the overlap.
    """
    if hi <= lo:
        return np.empty(0)
    b0 = lo // BLOCK
    b1 = (hi - 1) // BLOCK
    chunks = [fill(substream(seed, tag, b), BLOCK) for b in range(b0, b1 + 1)]
    arr = chunks[0] if len(chunks) == 1 else np.concatenate(chunks)
    start = lo - b0 * BLOCK
    return arr[start : start + (hi - lo)].copy()


def uniform_field(seed: int, tag: int, lo: int, hi: int) -> np.ndarray:
    """Uniform(0,1) i.i.d. field over ``[lo, hi)``."""
    return block_values(seed, tag, lo, hi, lambda rng, n: rng.random(n))
