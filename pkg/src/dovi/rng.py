"""Seeded, portable random streams.

Every stochastic component draws from a xoshiro256** generator whose 256-bit
state is filled by four SplitMix64 outputs of a 64-bit seed. The state is set
explicitly so the stream does not depend on any library's default seeding.
Categorical draws use inverse-CDF on ``Generator.random()`` doubles only, which
keeps the sampled sequence stable across numpy releases.
"""

from __future__ import annotations

import numpy as np
from randomgen import Xoshiro256

PRNG_NAME = "xoshiro256**/splitmix64"

_MASK = (1 << 64) - 1


def splitmix64(seed: int, count: int) -> list[int]:
    x = seed & _MASK
    out = []
    for _ in range(count):
        x = (x + 0x9E3779B97F4A7C15) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out.append(z ^ (z >> 31))
    return out


def make_rng(seed: int) -> np.random.Generator:
    """Return a numpy Generator backed by xoshiro256** seeded via SplitMix64."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    bitgen = Xoshiro256(0)
    state = bitgen.state
    state["s"] = np.array(splitmix64(seed, 4), dtype=np.uint64)
    state["has_uint32"] = 0
    state["uinteger"] = 0
    bitgen.state = state
    return np.random.Generator(bitgen)


def derive_seed(seed: int, *tags: int | str) -> int:
    """Deterministically mix a base seed with tags into an independent 63-bit seed."""
    x = seed & _MASK
    for tag in tags:
        if isinstance(tag, str):
            t = 0
            for ch in tag.encode():
                t = (t * 131 + ch) & _MASK
        else:
            t = int(tag) & _MASK
        x = splitmix64(x ^ t, 1)[0]
    return x >> 1


def draw(p: np.ndarray, rng: np.random.Generator) -> int:
    """Sample one index from the probability vector ``p``."""
    c = np.cumsum(p)
    idx = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(idx, len(p) - 1)


def draw_rows(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one index per row of the (n, k) matrix ``p``."""
    c = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0]) * c[:, -1]
    idx = (c <= u[:, None]).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)
