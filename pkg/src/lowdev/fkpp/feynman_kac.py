"""Monte Carlo evaluation of v(t, x) through its Feynman-Kac representation.

v(t, x) = E[exp(-int_0^t zeta(t-r, x-B_r) dr); B_t <= x]
        + E[int_0^t exp(-int_0^s zeta(t-r, x-B_r) dr) Ghat(t-s, x-B_s) ds]

with zeta = psi'(lambda* + u*).  Time integrals use the midpoint rule on
n_steps intervals, so u* and Ghat must be stored at the interval midpoints.
"""

from __future__ import annotations

import math

import numpy as np

from ..mechanism import BranchingMechanism, DerivedConstants, eval_psi
from ..rng import DEFAULT_BLOCK, SimEstimate, reduce_mean, run_blocks
from .grid import SpaceTimeField

MIN_PATHS = 100


def midpoint_times(t: float, n_steps: int) -> np.ndarray:
    h = t / n_steps
    return (np.arange(n_steps) + 0.5) * h


def _linear(x_nodes: np.ndarray, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    # np.interp clamps to the boundary values outside the window
    return np.interp(x, x_nodes, values)


def feynman_kac_check(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    u_star: SpaceTimeField,
    g_hat: SpaceTimeField,
    t: float,
    x: float,
    n_paths: int,
    seed: int,
    n_steps: int = 100,
    workers: int = 1,
) -> SimEstimate:
    """Estimate v(t, x) from Brownian paths sampled at the midpoint times.

    The returned flags hold the separate U1 (indicator) and U2 (source) parts.
    """
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be >= {MIN_PATHS} for a meaningful standard error")
    h = t / n_steps
    # path time r_j = (j + 1/2) h corresponds to PDE time t - r_j
    r_mid = midpoint_times(t, n_steps)
    zeta_rows = []
    g_rows = []
    for r in r_mid:
        xs, us = u_star.snapshot(t - r)
        _, gs = g_hat.snapshot(t - r)
        zeta_rows.append((xs, eval_psi(mech, consts.lambda_star + us, 1)))
        g_rows.append((xs, gs))

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        # increments: first to r_0 = h/2, then h apart, last from r_{n-1} to t
        z = rng.standard_normal((n_steps + 1, size))
        scales = np.full(n_steps + 1, math.sqrt(h))
        scales[0] = scales[-1] = math.sqrt(0.5 * h)
        b = np.cumsum(z * scales[:, None], axis=0)
        killed = np.zeros(size)
        u2 = np.zeros(size)
        for j in range(n_steps):
            pos = x - b[j]
            zeta = _linear(*zeta_rows[j], pos)
            half = killed + 0.5 * h * zeta
            u2 += h * np.exp(-half) * _linear(*g_rows[j], pos)
            killed += h * zeta
        u1 = np.exp(-killed) * (b[-1] <= x)
        return np.stack([u1 + u2, u1, u2])

    blocks = run_blocks(sampler, n_paths, seed, DEFAULT_BLOCK, workers)
    total = reduce_mean([blk[0] for blk in blocks], seed)
    part1 = reduce_mean([blk[1] for blk in blocks], seed)
    part2 = reduce_mean([blk[2] for blk in blocks], seed)
    flags = {"u1": part1.value, "u1_se": part1.std_error, "u2": part2.value, "u2_se": part2.std_error,
             "n_steps": n_steps}
    return SimEstimate(total.value, total.std_error, total.n_samples, total.seed, total.stream_count, flags)
