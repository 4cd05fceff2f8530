"""Counter-based random streams and scheduling-independent reductions.

Samples are grouped into fixed-size blocks; block b draws from
Philox(key = seed * 2^64 + b).  Each block returns partial sums and the
blocks are reduced in index order, so the result does not depend on how
many workers evaluated them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEFAULT_BLOCK = 1000
MASK64 = (1 << 64) - 1


def block_generator(seed: int, block: int) -> np.random.Generator:
    key = ((int(seed) & MASK64) << 64) | (int(block) & MASK64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SimEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    stream_count: int
    flags: dict = field(default_factory=dict)

    def within(self, reference: float, n_se: float = 3.0, allowance: float = 0.0) -> bool:
        return abs(self.value - reference) <= n_se * self.std_error + allowance

    def upper_bound(self, n_se: float = 3.0) -> float:
        return self.value + n_se * self.std_error


@dataclass(frozen=True)
class BlockSums:
    """Per-block partial sums: count, sum and sum of squares of the samples."""

    count: int
    total: float
    total_sq: float


def block_sizes(n_samples: int, block_size: int = DEFAULT_BLOCK) -> list[int]:
    full, rest = divmod(int(n_samples), int(block_size))
    return [block_size] * full + ([rest] if rest else [])


def run_blocks(
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    n_samples: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> list[np.ndarray]:
    """Evaluate ``sampler(rng, size)`` on every block; returns the block outputs in order."""
    sizes = block_sizes(n_samples, block_size)
    return _dispatch(sampler, list(enumerate(sizes)), seed, workers)


def run_block_ids(
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    block_ids: list[int],
    seed: int,
    block_size: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> list[np.ndarray]:
    """Full-size blocks with explicit indices, for open-ended sampling loops."""
    return _dispatch(sampler, [(b, block_size) for b in block_ids], seed, workers)


def _dispatch(sampler, jobs, seed, workers):
    def one(job):
        b, size = job
        return np.asarray(sampler(block_generator(seed, b), size))

    if workers <= 1:
        return [one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


def reduce_mean(blocks: list[np.ndarray], seed: int, flags: Optional[dict] = None) -> SimEstimate:
    """Mean and standard error from per-block partial sums, reduced in block order."""
    sums = [BlockSums(len(b), float(np.sum(b)), float(np.sum(np.square(b)))) for b in blocks]
    n = sum(s.count for s in sums)
    if n == 0:
        raise ValueError("no samples")
    total = math.fsum(s.total for s in sums)
    total_sq = math.fsum(s.total_sq for s in sums)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return SimEstimate(mean, math.sqrt(var / n), n, int(seed), len(sums), dict(flags or {}))


def frequency(blocks: list[np.ndarray], seed: int, flags: Optional[dict] = None) -> SimEstimate:
    """Frequency estimate with binomial SE; zero successes report the rule-of-three bound."""
    est = reduce_mean([np.asarray(b, dtype=float) for b in blocks], seed, flags)
    p = est.value
    n = est.n_samples
    se = math.sqrt(p * (1.0 - p) / n)
    flags = dict(est.flags)
    if p == 0.0:
        flags["zero_successes"] = True
        flags["upper_95"] = 3.0 / n
    return SimEstimate(p, se, n, est.seed, est.stream_count, flags)
