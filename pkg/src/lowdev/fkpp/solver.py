"""Reaction-diffusion solvers for u, u*, v and the BBM maximum CDF.

Every solve uses Strang splitting R(h/2) D(h) R(h/2):

* R is the exact reaction flow from :mod:`lowdev.flows` (blow-up data
  included), so boundary nodes follow the space-homogeneous solution exactly;
* D is Crank-Nicolson for (1/2) d^2/dx^2 with frozen Dirichlet boundary
  nodes, preceded by a few pairs of implicit-Euler half steps (Rannacher
  start-up) to damp the barrier discontinuity.

The coupled (u*, v) solve carries c = lambda* v and updates it with the
exact flow gap Phi_h(a) - Phi_h(a - c), which keeps relative precision for
the exponentially small v met in the lower-deviation regime.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from ..flows import ReactionFlow, make_flow
from ..mechanism import BranchingMechanism, DerivedConstants, hat_g_kernel, little_phi
from .grid import GridSpec, NumericalError, SpaceTimeField, TestFunction, _local_cubic

DEFAULT_RANNACHER_STEPS = 4
DEFAULT_STARTUP_LEVELS = 1
STARTUP_ZOOM = 16
STARTUP_HANDOFF = 50.0  # hand over at t0 = STARTUP_HANDOFF * dx**2


def _snapshot_steps(grid: GridSpec, snapshot_times: Optional[Iterable[float]]) -> list[int]:
    n = grid.n_steps
    if snapshot_times is None:
        count = min(n, 200)
        steps = np.unique(np.round(np.linspace(0, n, count + 1)[1:]).astype(int))
        return sorted(set(int(s) for s in steps) | {n})
    steps = set()
    for t in snapshot_times:
        s = int(round(t / grid.dt))
        if s < 1 or s > n or abs(s * grid.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"snapshot time {t} is not a positive multiple of dt within t_max")
        steps.add(s)
    return sorted(steps)


class _Diffusion:
    """theta-scheme for (1/2) u_xx on interior nodes, boundary nodes frozen."""

    def __init__(self, n_nodes: int, dx: float):
        self.n = n_nodes
        self.dx = dx

    def step(self, state: np.ndarray, h: float, theta: float) -> np.ndarray:
        r = h / (2.0 * self.dx**2)
        m = self.n - 2
        ab = np.empty((3, m))
        ab[0, :] = -theta * r
        ab[1, :] = 1.0 + 2.0 * theta * r
        ab[2, :] = -theta * r
        inner = state[:, 1:-1]
        rhs = inner + (1.0 - theta) * r * (state[:, :-2] - 2.0 * inner + state[:, 2:])
        rhs[:, 0] += theta * r * state[:, 0]
        rhs[:, -1] += theta * r * state[:, -1]
        solved = solve_banded((1, 1), ab, rhs.T, check_finite=False).T
        out = state.copy()
        out[:, 1:-1] = solved
        return out


def _startup_steps(h: float, ratio: float, smallest: float) -> np.ndarray:
    """Geometrically graded substeps that exactly fill the first step."""
    if ratio <= 1.0 or smallest >= h:
        return np.array([h])
    count = int(math.ceil(math.log(h / smallest) / math.log(ratio)))
    ends = h * ratio ** -np.arange(count, -1, -1.0)
    return np.diff(np.concatenate([[0.0], ends]))


def _evolve(
    grid: GridSpec,
    state: np.ndarray,
    reaction: Callable[[np.ndarray, float], np.ndarray],
    steps: Sequence[int],
    alpha: float,
    nonnegative: Sequence[bool] = (),
    first_step: int = 1,
    n_rannacher: int = DEFAULT_RANNACHER_STEPS,
    start_ratio: float = 1.2,
    start_floor: float = 0.03,
):
    """March the splitting scheme from step ``first_step - 1`` to ``max(steps)``.

    When starting from t = 0 the first step is filled with geometrically
    graded substeps down to ``start_floor * dx**2``; the first few use
    implicit Euler to damp the barrier discontinuity.
    """
    wanted = {s: i for i, s in enumerate(steps)}
    snaps = np.empty((state.shape[0], len(steps), grid.n_cells))
    offsets = np.zeros(len(steps), dtype=int)
    diffusion = _Diffusion(grid.n_cells, grid.dx)
    speed = math.sqrt(2.0 * alpha)
    h = grid.dt
    nodes = grid.nodes
    offset = 0
    if grid.moving_window:
        offset = int(math.floor(speed * (first_step - 1) * h / grid.dx))
        if offset:
            raise ValueError("a moving window must start at t = 0")
    for n in range(first_step, steps[-1] + 1):
        t_new = n * h
        if n == 1:
            subs = _startup_steps(h, start_ratio, start_floor * grid.dx**2)
            for j, sub in enumerate(subs):
                state = reaction(state, 0.5 * sub)
                if j < n_rannacher:
                    state = diffusion.step(state, 0.5 * sub, 1.0)
                    state = diffusion.step(state, 0.5 * sub, 1.0)
                else:
                    state = diffusion.step(state, sub, 0.5)
                state = reaction(state, 0.5 * sub)
        else:
            state = reaction(state, 0.5 * h)
            state = diffusion.step(state, h, 0.5)
            state = reaction(state, 0.5 * h)
        if grid.moving_window:
            target = int(math.floor(speed * t_new / grid.dx))
            shift = target - offset
            if shift > 0:
                left = state[:, 0].copy()
                right = state[:, -1].copy()
                state[:, :-shift] = state[:, shift:].copy()
                state[:, -shift:] = right[:, None]
                state[:, 0] = left
                offset = target
        _check_state(state, t_new, nodes + offset * grid.dx, nonnegative)
        if n in wanted:
            snaps[:, wanted[n], :] = state
            offsets[wanted[n]] = offset
    return offsets, snaps


def _interpolate_state(x_src: np.ndarray, state: np.ndarray, x_dst: np.ndarray) -> np.ndarray:
    out = np.empty((state.shape[0], len(x_dst)))
    inside = (x_dst >= x_src[0]) & (x_dst <= x_src[-1])
    for k in range(state.shape[0]):
        row = np.where(x_dst < x_src[0], state[k, 0], state[k, -1])
        row[inside] = _local_cubic(x_src, state[k], x_dst[inside])
        out[k] = row
    return out


def _march(
    grid: GridSpec,
    initial: Callable[[np.ndarray], np.ndarray],
    reaction,
    snapshot_times,
    alpha: float,
    nonnegative: Sequence[bool],
    startup_levels: int,
    extent: float = 0.0,
):
    """Solve on ``grid``; the initial layer is first resolved on nested finer grids.

    Blow-up data makes the layer near the barrier self-similar on the scale
    sqrt(t).  A lattice cannot represent it while t << dx^2, which leaves a
    first-order error in dx.  Each startup level re-solves [0, t0] with
    t0 = STARTUP_HANDOFF * dx^2 on a window around the barrier whose mesh is
    STARTUP_ZOOM times finer, then hands the resolved profile to the coarser grid.
    """
    steps = _snapshot_steps(grid, snapshot_times)
    times = np.array([s * grid.dt for s in steps])
    if startup_levels <= 0 or grid.moving_window:
        state = initial(grid.nodes)
        offsets, snaps = _evolve(grid, state, reaction, steps, alpha, nonnegative)
        return times, offsets, snaps
    start_step = max(1, int(round(STARTUP_HANDOFF * grid.dx**2 / grid.dt)))
    start_step = min(start_step, steps[-1])
    t0 = start_step * grid.dt
    dx_f = grid.dx / STARTUP_ZOOM
    half_width = 12.0 * math.sqrt(t0) + 4.0 * grid.dx
    x_lo = max(grid.x_min, -math.ceil(half_width / dx_f) * dx_f)
    x_hi = min(grid.x_max, math.ceil((half_width + extent) / dx_f) * dx_f)
    fine = GridSpec(x_lo, x_hi, dx_f, grid.dt / STARTUP_ZOOM, t0)
    # snapshots inside the startup layer come from the fine solve; the handoff never moves
    early = [s for s in steps if s <= start_step]
    fine_times = [s * grid.dt for s in early if s < start_step] + [t0]
    _, _, fine_snaps = _march(
        fine, initial, reaction, fine_times, alpha, nonnegative, startup_levels - 1, extent
    )
    coarse = [_interpolate_state(fine.nodes, fine_snaps[:, j, :], grid.nodes) for j in range(len(fine_times))]
    state = coarse[-1]
    late = [s for s in steps if s > start_step]
    snaps = np.empty((state.shape[0], len(steps), grid.n_cells))
    offsets = np.zeros(len(steps), dtype=int)
    for j, s in enumerate(s for s in early if s < start_step):
        snaps[:, steps.index(s), :] = coarse[j]
    if start_step in steps:
        snaps[:, steps.index(start_step), :] = state
    if late:
        late_offsets, late_snaps = _evolve(grid, state, reaction, late, alpha, nonnegative,
                                           first_step=start_step + 1)
        for j, s in enumerate(late):
            snaps[:, steps.index(s), :] = late_snaps[:, j, :]
            offsets[steps.index(s)] = late_offsets[j]
    return times, offsets, snaps


def _check_state(state, t, x, nonnegative):
    bad = ~np.isfinite(state)
    if np.any(bad):
        k, i = np.argwhere(bad)[0]
        raise NumericalError("non-finite value in solution", t, float(x[i]))
    for k, flag in enumerate(nonnegative):
        if not flag:
            continue
        row = state[k]
        scale = max(1.0, float(np.max(np.abs(row))))
        neg = row < -1e-9 * scale
        if np.any(neg):
            i = int(np.argmax(neg))
            raise NumericalError("negative value in solution", t, float(x[i]))
        np.maximum(row, 0.0, out=row)


def _extent(f: TestFunction) -> float:
    """Distance right of the barrier over which f(-x) is non-zero."""
    if f.kind == "step":
        return -f.support[0]
    if f.kind == "table":
        return -min(f.samples[0])
    return 0.0


def _initial_levels(f: TestFunction, x: np.ndarray, cap: float, cap_is_infinite: bool) -> np.ndarray:
    data = f.initial_data(x)
    if cap_is_infinite:
        return data
    return np.minimum(data, cap)


def solve_cauchy(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    f: TestFunction,
    psi_shift: str,
    grid: GridSpec,
    cap: Optional[float] = None,
    snapshot_times=None,
    cap_is_infinite: bool = True,
    startup_levels: int = DEFAULT_STARTUP_LEVELS,
    flow: Optional[ReactionFlow] = None,
) -> SpaceTimeField:
    """Solve u_t = (1/2) u_xx - psi(u) (or psi(lambda* + u)) from barrier data.

    The initial value left of the barrier is ``cap``.  By default the cap is
    read as +inf and the reaction flow maps it to the solution coming down
    from infinity; pass ``cap_is_infinite=False`` to start from the literal
    finite level instead.
    """
    if psi_shift not in ("none", "lambda_star"):
        raise ValueError("psi_shift must be 'none' or 'lambda_star'")
    ls = consts.lambda_star
    cap = 100.0 * ls if cap is None else float(cap)
    if cap_is_infinite and cap < 50.0 * ls:
        raise ValueError(f"cap must be >= 50 lambda* = {50 * ls:g}")
    if not cap > 0:
        raise ValueError("cap must be > 0")
    flow = flow or make_flow(mech, consts)
    advance = flow.full if psi_shift == "none" else flow.shifted

    def initial(x):
        return _initial_levels(f, x, cap, cap_is_infinite)[None, :]

    def reaction(state, h):
        return advance(state[0], h)[None, :]

    times, offsets, snaps = _march(
        grid, initial, reaction, snapshot_times, mech.alpha, (True,), startup_levels, _extent(f)
    )
    kind = "u" if psi_shift == "none" else "u_star"
    meta = {"cap": cap, "cap_is_infinite": cap_is_infinite, "test_function": f.kind}
    return SpaceTimeField(grid, times, offsets, snaps[0], kind, meta)


def compute_uv_triple(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    f: TestFunction,
    grid: GridSpec,
    cap: Optional[float] = None,
    snapshot_times=None,
):
    """(u, u*, v) from two independent solves and v = 1 - (u - u*)/lambda*."""
    flow = make_flow(mech, consts)
    u = solve_cauchy(mech, consts, f, "none", grid, cap, snapshot_times, flow=flow)
    u_star = solve_cauchy(mech, consts, f, "lambda_star", grid, cap, snapshot_times, flow=flow)
    v_vals = np.clip(1.0 - (u.values - u_star.values) / consts.lambda_star, 0.0, 1.0)
    return u, u_star, u.with_values(v_vals, "v")


def solve_coupled(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    f: TestFunction,
    grid: GridSpec,
    snapshot_times=None,
    startup_levels: int = DEFAULT_STARTUP_LEVELS,
    u_star_zero: bool = False,
):
    """(u*, v) with v carried directly, accurate in relative terms when tiny."""
    flow = make_flow(mech, consts)
    ls = consts.lambda_star

    def initial(x):
        us0 = np.zeros_like(x) if u_star_zero else f.initial_data(x)
        return np.vstack([us0, np.where(x >= 0, ls, 0.0)])

    def reaction(st, h):
        us, c = st
        return np.vstack([flow.shifted(us, h), flow.gap(us, c, h)])

    times, offsets, snaps = _march(
        grid, initial, reaction, snapshot_times, mech.alpha, (True, True), startup_levels, _extent(f)
    )
    u_star = SpaceTimeField(grid, times, offsets, snaps[0], "u_star", {"test_function": f.kind})
    v = SpaceTimeField(grid, times, offsets, np.clip(snaps[1] / ls, 0.0, 1.0), "v", {"test_function": f.kind})
    return u_star, v


def solve_bbm_cdf(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    grid: GridSpec,
    snapshot_times=None,
) -> SpaceTimeField:
    """F(t, x) = P(max of the skeleton BBM <= x).

    F solves F_t = (1/2) F_xx + q (phi(F) - F) with F(0, .) = 1{x >= 0}.
    Since q (phi(F) - F) = psi(lambda* (1 - F)) / lambda*, this is the v
    equation with u* = 0, which the coupled solver handles exactly.
    """
    _, v = solve_coupled(mech, consts, TestFunction.zero(), grid, snapshot_times, startup_levels=0, u_star_zero=True)
    return v.with_values(v.values, "bbm_cdf")


def g_fields(u: SpaceTimeField, u_star: SpaceTimeField, v: SpaceTimeField,
             mech: BranchingMechanism, consts: DerivedConstants):
    """Ghat = (1/lambda*)[psi(u) - psi(lambda*+u*) + psi'(lambda*+u*) lambda* v] and G = Ghat - phi(u*) v.

    ``u`` is accepted for interface symmetry; the kernel uses the identity
    u = lambda* + u* - lambda* v, which avoids cancellation.
    """
    for other in (u_star, v):
        if other.values.shape != u.values.shape or not np.allclose(other.times, u.times):
            raise ValueError("fields must share a grid and snapshot times")
    g_hat = hat_g_kernel(mech, consts, u_star.values, v.values)
    g = g_hat - little_phi(consts, mech, u_star.values) * v.values
    return u.with_values(g_hat, "g_hat"), u.with_values(g, "g")
