"""Branching particle approximation of quadratic super-Brownian motion.

M particles of mass 1/M start at 0.  Each lives Exp(r) with r = 2 beta M - alpha
and leaves 2 children with probability p2 = beta M / r, else none.  The
time-t configuration is sampled exactly through the reduced tree of lineages
that survive to t: the number of such root lineages is Binomial(M, pi(t)) and
a surviving lineage with w time left splits at rate b pi(w), where b = beta M,
d = r - b and pi(w) = alpha / (b - d e^{-alpha w}).  Every particle alive at t
is a tip of this tree, so the supremum and total mass are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fkpp.grid import GridSpec, TestFunction, default_grid
from .fkpp.solver import solve_cauchy
from .mechanism import BranchingMechanism, DerivedConstants
from .rng import DEFAULT_BLOCK, SimEstimate, block_generator, frequency, reduce_mean, run_blocks


class ParticleError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleConfig:
    mech: BranchingMechanism
    mass_scale: int  # M
    t_horizon: float
    initial_particles: Optional[int] = None  # defaults to M (unit mass at 0)
    dt_path: float = 0.001
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.mech.levy_part is not None or not self.mech.beta > 0:
            problems.append("particle approximation needs a quadratic mechanism (beta > 0, no Levy part)")
        elif not self.mass_scale > self.mech.alpha / self.mech.beta:
            problems.append("mass_scale M must exceed alpha/beta")
        if self.initial_particles is not None and self.initial_particles < 1:
            problems.append("initial_particles must be >= 1")
        if not self.t_horizon > 0:
            problems.append("t_horizon must be > 0")
        if problems:
            raise ParticleError("; ".join(problems))

    @property
    def n_initial(self) -> int:
        return self.initial_particles if self.initial_particles is not None else self.mass_scale

    @property
    def lifetime_rate(self) -> float:
        return 2.0 * self.mech.beta * self.mass_scale - self.mech.alpha

    @property
    def split_probability(self) -> float:
        return self.mech.beta * self.mass_scale / self.lifetime_rate

    @property
    def birth_rate(self) -> float:
        return self.mech.beta * self.mass_scale

    @property
    def death_rate(self) -> float:
        return self.lifetime_rate - self.birth_rate

    def survival(self, w):
        """P(a single particle has descendants alive after time w)."""
        a, b, d = self.mech.alpha, self.birth_rate, self.death_rate
        return a / (b - d * np.exp(-a * np.asarray(w, dtype=float)))

    @property
    def ultimate_extinction(self) -> float:
        """Extinction probability of one particle's line: d / b."""
        return self.death_rate / self.birth_rate


@dataclass(frozen=True)
class SupRunResult:
    sup_support: float  # -inf when extinct
    extinct: bool
    total_mass: float

    def __post_init__(self):
        if self.extinct != (self.sup_support == -math.inf) or self.extinct != (self.total_mass == 0.0):
            raise ParticleError("extinct, sup = -inf and zero mass must coincide")


def sample_runs(rng: np.random.Generator, n_runs: int, config: ParticleConfig):
    """Exact (sup, tip count) at the horizon for n_runs independent systems."""
    t = config.t_horizon
    a, b, d = config.mech.alpha, config.birth_rate, config.death_rate
    roots = rng.binomial(config.n_initial, float(config.survival(t)), size=n_runs)
    sup = np.full(n_runs, -np.inf)
    tips = np.zeros(n_runs, dtype=np.int64)
    run = np.repeat(np.arange(n_runs), roots)
    born = np.zeros(run.size)
    pos = np.zeros(run.size)
    while run.size:
        # invert the cumulative split hazard log((b e^{a w} - d)) from w = t - born
        w0 = t - born
        e = rng.exponential(size=run.size)
        inner = (b * np.exp(a * w0) - d) * np.exp(-e)
        split = inner > b - d
        w1 = np.where(split, np.log(np.maximum(d + inner, 1e-300) / b) / a, 0.0)
        s1 = t - w1
        new_pos = pos + np.sqrt(s1 - born) * rng.standard_normal(run.size)
        done = ~split
        np.add.at(tips, run[done], 1)
        np.maximum.at(sup, run[done], new_pos[done])
        run = np.repeat(run[split], 2)
        born = np.repeat(s1[split], 2)
        pos = np.repeat(new_pos[split], 2)
    return sup, tips


def simulate_sbm(config: ParticleConfig, stream_id: int = 0) -> SupRunResult:
    sup, tips = sample_runs(block_generator(config.seed, stream_id), 1, config)
    extinct = bool(tips[0] == 0)
    return SupRunResult(float(sup[0]), extinct, float(tips[0]) / config.mass_scale)


def estimate_sup_cdf(config: ParticleConfig, x: float, n_runs: int, workers: int = 1) -> SimEstimate:
    """P(M_t <= x) with extinct runs counted as M_t = -inf."""
    if n_runs < 1000:
        raise ParticleError("n_runs must be >= 1e3")

    def sampler(rng, size):
        sup, _ = sample_runs(rng, size, config)
        return (sup <= x).astype(float)

    return frequency(run_blocks(sampler, n_runs, config.seed, DEFAULT_BLOCK, workers), config.seed,
                     {"mass_scale": config.mass_scale})


def estimate_extinction(config: ParticleConfig, n_runs: int, workers: int = 1) -> SimEstimate:
    """Extinction frequency by the horizon; only the surviving-root count is needed."""
    p_root = float(config.survival(config.t_horizon))

    def sampler(rng, size):
        return (rng.binomial(config.n_initial, p_root, size=size) == 0).astype(float)

    return frequency(run_blocks(sampler, n_runs, config.seed, DEFAULT_BLOCK, workers), config.seed)


def estimate_mean_mass(config: ParticleConfig, n_runs: int, workers: int = 1) -> SimEstimate:
    def sampler(rng, size):
        _, tips = sample_runs(rng, size, config)
        return tips / config.mass_scale

    return reduce_mean(run_blocks(sampler, n_runs, config.seed, DEFAULT_BLOCK, workers), config.seed)


def estimate_conditional_cdf(config: ParticleConfig, x: float, n_runs: int, workers: int = 1) -> SimEstimate:
    """P(M_t <= x | ultimate survival).

    Given N particles at t, the line survives forever with probability
    1 - (d/b)^N; this weight replaces the unobservable survival indicator and
    the ratio estimator's SE comes from the delta method.
    """
    ext = config.ultimate_extinction

    def sampler(rng, size):
        sup, tips = sample_runs(rng, size, config)
        weight = -np.expm1(tips * math.log(ext))
        return np.stack([(sup <= x) * weight, weight])

    blocks = run_blocks(sampler, n_runs, config.seed, DEFAULT_BLOCK, workers)
    num = np.concatenate([blk[0] for blk in blocks])
    den = np.concatenate([blk[1] for blk in blocks])
    ratio = math.fsum(num) / math.fsum(den)
    resid = num - ratio * den
    se = math.sqrt(np.var(resid, ddof=1) / len(num)) / np.mean(den)
    return SimEstimate(ratio, float(se), len(num), config.seed, len(blocks),
                       {"survival_weight_mean": float(np.mean(den))})


def finite_mass_cdf(mech: BranchingMechanism, consts: DerivedConstants, mass_scale: int, t: float,
                    x_values, grid: Optional[GridSpec] = None) -> np.ndarray:
    """Exact P_M(M_t <= x) = (1 - u_M / M)^M for the M-particle system.

    u_M = M (1 - g), with g the one-particle CDF, solves the same equation as
    u but starts from the finite value M left of the barrier.
    """
    grid = grid or default_grid(mech.alpha, t, left=10.0, right=10.0)
    u_m = solve_cauchy(mech, consts, TestFunction.zero(), "none", grid, cap=float(mass_scale),
                       snapshot_times=[t], cap_is_infinite=False)
    vals = np.asarray(u_m.at(t, np.asarray(x_values, dtype=float)))
    return np.exp(mass_scale * np.log1p(-vals / mass_scale))


def finite_mass_conditional_cdf(mech: BranchingMechanism, consts: DerivedConstants, mass_scale: int,
                                t: float, x_values, grid: Optional[GridSpec] = None) -> np.ndarray:
    """Exact P_M(M_t <= x | ultimate survival) for the M-particle system.

    P_M(M_t <= x, extinction) = (1 - w_M / M)^M where w_M solves the same
    equation from M left of the barrier and M (1 - d/b) = alpha/beta right of it.
    """
    grid = grid or default_grid(mech.alpha, t, left=10.0, right=10.0)
    cfg = ParticleConfig(mech, mass_scale, t)
    x_values = np.asarray(x_values, dtype=float)
    both = finite_mass_cdf(mech, consts, mass_scale, t, x_values, grid)
    level = mass_scale * (1.0 - cfg.ultimate_extinction)
    f = TestFunction.step(level, -(grid.x_max + 1.0), 0.0)
    w_m = solve_cauchy(mech, consts, f, "none", grid, cap=float(mass_scale), snapshot_times=[t],
                       cap_is_infinite=False)
    vals = np.asarray(w_m.at(t, x_values))
    dying = np.exp(mass_scale * np.log1p(-vals / mass_scale))
    p_ext = cfg.ultimate_extinction ** cfg.n_initial
    return (both - dying) / (1.0 - p_ext)
