"""
IBPLab RNG Module
Counter-based random streams: every path owns a Philox generator whose key
is a 128-bit SeedSequence mix of (seed, path_index, domain). Nothing depends
on which worker draws the path or in which order.
"""

from typing import Optional

import numpy as np

from .simulate import NoisePath

# Domain tags keep noise and auxiliary streams of one path apart.
DOMAIN_TAGS = {
    'noise': 0x6E6F697365,
    'auxiliary': 0x61757869,
    'sampler': 0x73616D70,
}

_MASK64 = (1 << 64) - 1


def _key(seed: int, path_index: int, domain: str) -> np.ndarray:
    if domain not in DOMAIN_TAGS:
        raise ValueError(f"unknown RNG domain '{domain}'")
    entropy = [int(seed) & _MASK64, int(path_index) & _MASK64, DOMAIN_TAGS[domain]]
    return np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)


def rng_for_path(seed: int, path_index: int, domain: str = 'noise') -> np.random.Generator:
    """Generator for one path; identical on every platform and worker count."""
    return np.random.Generator(np.random.Philox(key=_key(seed, path_index, domain)))


def draw_noise(seed: int, path_index: int, steps: int, dim: int, dt: float) -> NoisePath:
    """Increments of a single path, N(0, dt I)."""
    gen = rng_for_path(seed, path_index, 'noise')
    increments = np.sqrt(dt) * gen.standard_normal((steps, dim))
    return NoisePath(increments, dt, seed, path_index)


def draw_noise_batch(seed: int, start: int, count: int, steps: int, dim: int, dt: float,
                     out: Optional[np.ndarray] = None) -> NoisePath:
    """Increments of paths start..start+count-1 stacked along a leading axis."""
    if out is None:
        out = np.empty((count, steps, dim))
    scale = np.sqrt(dt)
    for offset in range(count):
        gen = rng_for_path(seed, start + offset, 'noise')
        out[offset] = scale * gen.standard_normal((steps, dim))
    return NoisePath(out, dt, seed, start)
