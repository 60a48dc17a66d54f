"""Named, counter-derived random streams.

A master seed is split into streams by name and index so that every
estimator stage and every trial block owns an independent generator.  The
derivation only depends on (seed, name, index), never on how many workers
run, which is what makes the Monte Carlo outputs thread-count independent.
"""
from __future__ import annotations

import zlib

import numpy as np

BLOCK = 1024  # trials per RNG block


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    key = (zlib.crc32(name.encode()), int(index))
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


class Streams:
    """Factory of named streams under one master seed."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)

    def get(self, name: str, index: int = 0) -> np.random.Generator:
        return stream(self.seed, name, index)

    def child(self, name: str) -> "Streams":
        # fold the name into a new master seed
        return Streams((self.seed * 1_000_003 + zlib.crc32(name.encode())) % 2**63)

    def describe(self) -> dict:
        return {"master_seed": self.seed,
                "derivation": "SeedSequence(seed, spawn_key=(crc32(name), index)) -> Philox",
                "block_size": BLOCK}


def as_streams(rng) -> Streams:
    """Accept an int seed, a Streams object or a numpy Generator."""
    if isinstance(rng, Streams):
        return rng
    if isinstance(rng, np.random.Generator):
        return Streams(int(rng.integers(0, 2**63)))
    if rng is None:
        return Streams(0)
    return Streams(int(rng))


def blocks(total: int, size: int = BLOCK):
    """Yield (block index, start, stop) covering range(total)."""
    for b, start in enumerate(range(0, total, size)):
        yield b, start, min(start + size, total)


def map_blocks(fn, total: int, workers: int = 1, size: int = BLOCK):
    """Run ``fn(block_index, start, stop)`` over all blocks and return the
    results in block order.  The thread pool only changes wall time."""
    jobs = list(blocks(total, size))
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda j: fn(*j), jobs))
