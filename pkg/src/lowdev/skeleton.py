"""Monte Carlo for the skeleton branching Brownian motion.

Trees are grown generation by generation, vectorized over many trees.  Every
line of descent carries the position of its terminal point at the horizon,
drawn when the line is born; intermediate positions are then filled in by
Brownian-bridge sampling.  The joint law of all positions is unchanged, but a
tree can be rejected for {M_t <= x} as soon as any line's endpoint exceeds x.
Terminal positions are exact (no time lattice).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri

from .mechanism import DerivedConstants, OffspringLaw
from .rng import DEFAULT_BLOCK, SimEstimate, block_generator, frequency, run_block_ids, run_blocks

FEASIBILITY_THRESHOLD = 1e-5
PILOT_TREES = 10_000


class SkeletonError(RuntimeError):
    pass


@dataclass(frozen=True)
class SkeletonConfig:
    consts: DerivedConstants
    offspring: OffspringLaw
    alpha: float
    t_horizon: float
    dt_path: float = 0.001
    population_cap: int = 1_000_000

    def __post_init__(self):
        problems = []
        if not self.t_horizon > 0:
            problems.append("t_horizon must be > 0")
        if not (0 < self.dt_path <= 0.01 * self.t_horizon):
            problems.append("dt_path must lie in (0, 0.01 t_horizon]")
        if self.population_cap < 10_000:
            problems.append("population_cap must be >= 1e4")
        if not self.alpha > 0:
            problems.append("alpha must be > 0")
        if problems:
            raise SkeletonError("; ".join(problems))

    @property
    def q(self) -> float:
        return self.consts.q

    def with_horizon(self, t_horizon: float) -> "SkeletonConfig":
        return SkeletonConfig(self.consts, self.offspring, self.alpha, t_horizon,
                              min(self.dt_path, 0.01 * t_horizon), self.population_cap)


@dataclass(frozen=True)
class TreeObservables:
    max_position: float  # M_t^Z
    population: int
    first_branch_time: float  # inf when the root outlives the horizon
    extinct_by_cap: bool  # run aborted by the population cap

    def __post_init__(self):
        if not self.extinct_by_cap and (self.population >= 2) != math.isfinite(self.first_branch_time):
            raise SkeletonError("population >= 2 must coincide with a branching before the horizon")


@dataclass
class Forest:
    """Per-tree arrays for one block of trees."""

    accepted: np.ndarray  # all terminal positions <= x
    max_position: np.ndarray  # nan for rejected trees
    population: np.ndarray  # -1 for rejected trees
    first_branch_time: np.ndarray
    capped: np.ndarray


def grow_forest(
    rng: np.random.Generator,
    n_trees: int,
    config: SkeletonConfig,
    barrier: float = math.inf,
    condition_root_endpoint: bool = False,
) -> Forest:
    """Grow n_trees independent skeleton trees up to config.t_horizon.

    With a finite barrier, trees are abandoned once some terminal position
    exceeds it.  With ``condition_root_endpoint`` the root line's endpoint is
    drawn from its law conditioned to lie below the barrier; acceptance then
    estimates P(M_t <= x) / Phi(x / sqrt(t)).
    """
    t = config.t_horizon
    q = config.q
    probs = config.offspring.resolved()
    support = config.offspring.support
    cap = config.population_cap

    alive = np.ones(n_trees, dtype=bool)
    capped = np.zeros(n_trees, dtype=bool)
    max_pos = np.full(n_trees, -np.inf)
    pop = np.zeros(n_trees, dtype=np.int64)
    tau = np.full(n_trees, np.inf)

    if condition_root_endpoint:
        mass = ndtr(barrier / math.sqrt(t))
        end0 = math.sqrt(t) * ndtri(rng.uniform(size=n_trees) * mass)
    else:
        end0 = math.sqrt(t) * rng.standard_normal(n_trees)
    alive &= end0 <= barrier

    tree = np.arange(n_trees)
    born = np.zeros(n_trees)
    pos = np.zeros(n_trees)
    end = end0
    is_root = np.ones(n_trees, dtype=bool)
    while tree.size:
        keep = alive[tree]
        tree, born, pos, end, is_root = tree[keep], born[keep], pos[keep], end[keep], is_root[keep]
        if not tree.size:
            break
        death = born + rng.exponential(1.0 / q, size=tree.size)
        done = death >= t
        np.add.at(pop, tree[done], 1)
        np.maximum.at(max_pos, tree[done], end[done])

        br = ~done
        tree, born, pos, end, death, is_root = tree[br], born[br], pos[br], end[br], death[br], is_root[br]
        if not tree.size:
            break
        tau[tree[is_root]] = death[is_root]
        # bridge from (born, pos) to (t, end), evaluated at the death time
        frac = (death - born) / (t - born)
        var = (death - born) * (t - death) / (t - born)
        dpos = pos + frac * (end - pos) + np.sqrt(var) * rng.standard_normal(tree.size)
        kids = support[rng.choice(len(probs), size=tree.size, p=probs)] if len(probs) > 1 \
            else np.full(tree.size, support[0])
        parent = np.repeat(np.arange(tree.size), kids)
        first = np.zeros(parent.size, dtype=bool)
        first[np.concatenate(([0], np.cumsum(kids)[:-1]))] = True
        c_tree = tree[parent]
        c_born = death[parent]
        c_pos = dpos[parent]
        c_end = end[parent].copy()
        fresh = ~first
        c_end[fresh] = c_pos[fresh] + np.sqrt(t - c_born[fresh]) * rng.standard_normal(int(fresh.sum()))
        over = fresh & (c_end > barrier)
        alive[c_tree[over]] = False
        counts = np.bincount(c_tree, minlength=n_trees) + pop
        too_big = counts > cap
        capped |= too_big & alive
        alive &= ~too_big
        tree, born, pos, end = c_tree, c_born, c_pos, c_end
        is_root = np.zeros(tree.size, dtype=bool)

    accepted = alive & ~capped
    max_out = np.where(accepted, max_pos, np.nan)
    pop_out = np.where(accepted, pop, -1)
    return Forest(accepted, max_out, pop_out, tau, capped)


def simulate_tree(config: SkeletonConfig, stream_id: int, seed: int = 0) -> TreeObservables:
    """One tree from its own counter-based stream."""
    forest = grow_forest(block_generator(seed, stream_id), 1, config)
    return TreeObservables(
        max_position=float(forest.max_position[0]),
        population=int(forest.population[0]),
        first_branch_time=float(forest.first_branch_time[0]),
        extinct_by_cap=bool(forest.capped[0]),
    )


def simulate_observables(config: SkeletonConfig, n_trees: int, seed: int, workers: int = 1) -> Forest:
    """Unconditioned trees, concatenated over blocks in block order."""
    blocks = run_blocks(lambda rng, size: _pack(grow_forest(rng, size, config)), n_trees, seed,
                        DEFAULT_BLOCK, workers)
    data = np.concatenate(blocks, axis=1)
    return Forest(data[0] > 0, data[1], data[2].astype(np.int64), data[3], data[4] > 0)


def _pack(forest: Forest) -> np.ndarray:
    return np.stack([forest.accepted.astype(float), forest.max_position, forest.population.astype(float),
                     forest.first_branch_time, forest.capped.astype(float)])


def upper_envelope(x: float, t: float, q: float, alpha: float) -> float:
    """(2qt + 1) sup_{0<=s<=t} e^{-qs} Phi((x - sqrt(2 alpha)(t - s) + sqrt(t)) / sqrt(s))."""
    c = math.sqrt(2.0 * alpha)

    def value(s):
        if s <= 0.0:
            return 1.0 if x - c * t + math.sqrt(t) > 0 else 0.0
        return math.exp(-q * s) * float(ndtr((x - c * (t - s) + math.sqrt(t)) / math.sqrt(s)))

    grid = np.linspace(0.0, t, 2001)
    vals = np.array([value(s) for s in grid])
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = vals[i]
    if hi > lo:
        res = minimize_scalar(lambda s: -value(s), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -res.fun)
    return (2.0 * q * t + 1.0) * best


def estimate_max_cdf(
    config: SkeletonConfig,
    x: float,
    n_samples: int,
    seed: int,
    condition_root_endpoint: bool = False,
    workers: int = 1,
) -> SimEstimate:
    """P(M_t^Z <= x) by plain rejection frequency.

    ``condition_root_endpoint`` is a variance-reduction variant: the root
    endpoint is drawn below x and the frequency is multiplied by
    Phi(x / sqrt(t)).  Flags record runs excluded by the population cap and
    the upper envelope.
    """
    if n_samples < 1000:
        raise SkeletonError("n_samples must be >= 1e3")

    def sampler(rng, size):
        forest = grow_forest(rng, size, config, barrier=x, condition_root_endpoint=condition_root_endpoint)
        return np.stack([forest.accepted.astype(float), forest.capped.astype(float)])

    blocks = run_blocks(sampler, n_samples, seed, DEFAULT_BLOCK, workers)
    n_capped = int(sum(b[1].sum() for b in blocks))
    flags = {"capped_runs": n_capped,
             "envelope": upper_envelope(x, config.t_horizon, config.q, config.alpha)}
    if config.offspring.truncation_mass > 1e-9:
        flags["truncation_mass"] = config.offspring.truncation_mass
    kept = [b[0][b[1] == 0] for b in blocks]
    est = frequency(kept, seed, flags)
    if not condition_root_endpoint:
        return est
    scale = float(ndtr(x / math.sqrt(config.t_horizon)))
    flags = dict(est.flags, root_endpoint_mass=scale)
    return SimEstimate(scale * est.value, scale * est.std_error, est.n_samples, est.seed,
                       est.stream_count, flags)


def population_tail(config: SkeletonConfig, k: int, n_samples: int, seed: int,
                    workers: int = 1) -> tuple[SimEstimate, float]:
    """P(||Z_t|| <= k) and the bound k e^{-qt}."""
    def sampler(rng, size):
        forest = grow_forest(rng, size, config)
        return np.stack([(forest.population <= k) & ~forest.capped, forest.capped]).astype(float)

    blocks = run_blocks(sampler, n_samples, seed, DEFAULT_BLOCK, workers)
    n_capped = int(sum(b[1].sum() for b in blocks))
    est = frequency([b[0][b[1] == 0] for b in blocks], seed, {"capped_runs": n_capped})
    return est, k * math.exp(-config.q * config.t_horizon)


@dataclass
class TauSample:
    tau: np.ndarray
    t: float
    delta: float
    barrier: float
    regime: str
    acceptance_rate: float  # of the sampler, after conditioning the root endpoint
    root_endpoint_mass: float
    n_trees: int
    window: tuple
    flags: dict = field(default_factory=dict)

    @property
    def event_probability(self) -> float:
        return self.acceptance_rate * self.root_endpoint_mass

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.tau) / self.t)

    @property
    def median_gap(self) -> float:
        """Median of t - tau."""
        return float(np.median(self.t - self.tau))

    @property
    def window_fraction(self) -> float:
        lo, hi = self.window
        return float(np.mean((self.tau >= lo) & (self.tau <= hi)))

    def quantiles(self, levels=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict:
        return {lv: float(np.quantile(self.tau, lv)) for lv in levels}


def tau_window(regime: str, delta: float, rho: float, t: float, depth: float = 3.0) -> tuple:
    """Concentration window for the first branching time in each regime."""
    spread = math.log(t) * math.sqrt(t)
    if regime == "shallow":
        centre = (1.0 - delta) / rho * t
        return (max(centre - spread, 0.0), min(centre + spread, t))
    if regime == "critical":
        return (max(t - spread, 0.0), t - t**0.25)
    return (max(t - depth, 0.0), t)


def conditional_tau_sample(
    config: SkeletonConfig,
    delta: float,
    n_accepted_target: int,
    seed: int,
    max_trees: int = 50_000_000,
    workers: int = 1,
) -> TauSample:
    """Exact samples of tau given {M_t^Z <= sqrt(2 alpha) delta t}.

    The root endpoint is drawn conditioned below the barrier (the event
    implies it), and the remaining trees are accepted or rejected exactly.
    A pilot run measures the acceptance rate; below FEASIBILITY_THRESHOLD the
    request is refused.
    """
    from .deviation import classify

    t = config.t_horizon
    cls = classify(config.consts, delta)
    barrier = math.sqrt(2.0 * config.alpha) * delta * t

    def sampler(rng, size):
        forest = grow_forest(rng, size, config, barrier=barrier, condition_root_endpoint=True)
        tau = np.where(forest.accepted, forest.first_branch_time, np.nan)
        return np.stack([forest.accepted.astype(float), tau, forest.capped.astype(float)])

    pilot_seed = (int(seed) + 0x5EED) & ((1 << 64) - 1)
    pilot = run_blocks(sampler, PILOT_TREES, pilot_seed, DEFAULT_BLOCK, workers)
    hits = sum(int(b[0].sum()) for b in pilot)
    rate = hits / PILOT_TREES
    if rate < FEASIBILITY_THRESHOLD or hits == 0:
        raise SkeletonError(f"acceptance rate {rate:.3e} below feasibility threshold {FEASIBILITY_THRESHOLD:g}")

    taus = []
    n_acc = 0
    n_trees = 0
    n_capped = 0
    block = 0
    batch = max(workers, 1)
    while n_acc < n_accepted_target:
        if n_trees >= max_trees:
            raise SkeletonError(f"tree budget {max_trees} exhausted with {n_acc} accepted")
        ids = list(range(block, block + batch))
        outs = run_block_ids(sampler, ids, seed, DEFAULT_BLOCK, workers)
        for out in outs:
            n_trees += out.shape[1]
            n_capped += int(out[2].sum())
            acc = out[0] > 0
            taus.append(out[1][acc])
            n_acc += int(acc.sum())
            if n_acc >= n_accepted_target:
                break
        block += batch
    tau = np.concatenate(taus)
    # trees whose root outlived the horizon have tau = inf; record them as t
    tau = np.minimum(tau, t)
    return TauSample(
        tau=tau,
        t=t,
        delta=delta,
        barrier=barrier,
        regime=cls.regime,
        acceptance_rate=n_acc / n_trees,
        root_endpoint_mass=float(ndtr(barrier / math.sqrt(t))),
        n_trees=n_trees,
        window=tau_window(cls.regime, delta, config.consts.rho, t),
        flags={"pilot_rate": rate, "capped_runs": n_capped},
    )

