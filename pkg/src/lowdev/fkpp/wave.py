"""Critical traveling wave (1/2) w'' + sqrt(2 alpha) w' - psi(w) = 0 and its PDE limit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ..mechanism import BranchingMechanism, DerivedConstants, eval_psi
from .grid import GridError, SpaceTimeField


class WaveError(RuntimeError):
    pass


def centering(alpha: float, t):
    """m(t) = sqrt(2 alpha) t - 3/(2 sqrt(2 alpha)) log t."""
    c = math.sqrt(2.0 * alpha)
    t = np.asarray(t, dtype=float)
    return c * t - 1.5 / c * np.log(t)


def left_decay_rate(mech: BranchingMechanism, consts: DerivedConstants) -> float:
    """Root mu of mu^2/2 + sqrt(2 alpha) mu - q = 0, i.e. sqrt(2 alpha)(rho - 1)."""
    c = math.sqrt(2.0 * mech.alpha)
    return c * (consts.rho - 1.0)


@dataclass(frozen=True)
class TravelingWave:
    x_nodes: np.ndarray
    w_values: np.ndarray
    lambda_left: float
    decay_rate_right: float
    decay_rate_left: float
    speed: float
    left_amplitude: float  # lambda* - w(z) ~ left_amplitude * exp(mu z) as z -> -inf
    left_second_order: float
    max_residual: float
    measured_left_rate: float
    normalization: str = "w(0)=lambda*/2"
    _spline: Optional[CubicSpline] = field(default=None, repr=False, compare=False)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        spline = self._spline or CubicSpline(self.x_nodes, self.w_values)
        out = np.asarray(spline(np.clip(z, self.x_nodes[0], self.x_nodes[-1])), dtype=float)
        left = z < self.x_nodes[0]
        if np.any(left):
            e = self.left_amplitude * np.exp(self.decay_rate_left * z[left])
            out[left] = self.lambda_left - (e - self.left_second_order * e * e)
        right = z > self.x_nodes[-1]
        if np.any(right):
            z_end = self.x_nodes[-1]
            w_end = self.w_values[-1]
            # critical front: w ~ (a + b z) e^{-c z}; continue with the local log slope
            slope = (math.log(self.w_values[-1]) - math.log(self.w_values[-2])) / (z_end - self.x_nodes[-2])
            out[right] = w_end * np.exp(slope * (z[right] - z_end))
        return out if out.ndim else float(out)

    @property
    def left_gap(self) -> float:
        return self.lambda_left - float(self.w_values[0])


def _five_point_residual(z, w, mech, speed):
    h = z[1] - z[0]
    d1 = (w[:-4] - 8 * w[1:-3] + 8 * w[3:-1] - w[4:]) / (12 * h)
    d2 = (-w[:-4] + 16 * w[1:-3] - 30 * w[2:-2] + 16 * w[3:-1] - w[4:]) / (12 * h * h)
    mid = w[2:-2]
    return 0.5 * d2 + speed * d1 - eval_psi(mech, np.maximum(mid, 0.0))


def traveling_wave(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    half_width: float = 30.0,
    tol: float = 1e-6,
    spacing: float = 0.01,
    start_gap: float = 1e-7,
) -> TravelingWave:
    """Shoot from the saddle at lambda* along its unstable direction.

    The profile is integrated in (log w, w'/w), which stays well scaled in the
    x e^{-sqrt(2 alpha) x} front, then translated so that w(0) = lambda*/2.
    """
    ls = consts.lambda_star
    speed = math.sqrt(2.0 * mech.alpha)
    mu = left_decay_rate(mech, consts)
    curv = eval_psi(mech, ls, 2)
    second = curv / (2.0 * (consts.q + mu * mu))
    eta0 = start_gap - second * start_gap**2
    deta0 = mu * (start_gap - 2.0 * second * start_gap**2)
    w0 = ls - eta0
    state0 = [math.log(w0), -deta0 / w0]

    def rhs(_s, y):
        w = math.exp(y[0])
        p = y[1]
        return [p, 2.0 * (eval_psi(mech, w) / w - speed * p) - p * p]

    def half(_s, y):
        return y[0] - math.log(0.5 * ls)

    half.terminal = False
    span = 40.0 / mu + 2.0 * half_width + 20.0
    sol = solve_ivp(rhs, (0.0, span), state0, method="DOP853", rtol=1e-13, atol=1e-13,
                    dense_output=True, events=half)
    if not sol.success or len(sol.t_events[0]) == 0:
        raise WaveError(f"shooting failed: {sol.message}")
    s_half = float(sol.t_events[0][0])
    s_end = min(sol.t[-1], s_half + half_width)
    if s_end < s_half + half_width - 1e-9:
        raise WaveError("integration stopped before the right end of the window")
    z = np.arange(-half_width, half_width + 0.5 * spacing, spacing)
    s = z + s_half
    w = np.empty_like(z)
    numeric = s >= 0.0
    w[numeric] = np.exp(sol.sol(s[numeric])[0])
    e = start_gap * np.exp(mu * s[~numeric])
    w[~numeric] = ls - (e - second * e * e)
    if np.any(np.diff(w[1:-1]) >= 0):
        raise WaveError("profile is not strictly decreasing")
    resid = _five_point_residual(z, w, mech, speed)
    max_res = float(np.max(np.abs(resid)))
    if max_res >= tol:
        raise WaveError(f"ODE residual {max_res:.3e} exceeds tol {tol:.1e}")
    # measured left rate from the integrated part where the gap is small
    gap = ls - w
    sel = numeric & (gap > 1e-6) & (gap < 1e-4)
    if np.count_nonzero(sel) >= 5:
        measured = float(np.polyfit(z[sel], np.log(gap[sel]), 1)[0])
    else:
        measured = float("nan")
    amplitude = start_gap * math.exp(-mu * s_half)
    return TravelingWave(
        x_nodes=z,
        w_values=w,
        lambda_left=ls,
        decay_rate_right=speed,
        decay_rate_left=mu,
        speed=speed,
        left_amplitude=amplitude,
        left_second_order=second,
        max_residual=max_res,
        measured_left_rate=measured,
        _spline=CubicSpline(z, w),
    )


def level_crossing(z: np.ndarray, values: np.ndarray, level: float) -> float:
    """Position where a decreasing profile crosses ``level`` (cubic interpolation)."""
    above = values >= level
    if not (above[0] and not above[-1]):
        raise WaveError(f"profile does not cross level {level:g} inside the window")
    i = int(np.argmin(above)) - 1
    spline = CubicSpline(z, values - level)
    return brentq(spline, z[i], z[i + 1])


@dataclass(frozen=True)
class WaveEstimate:
    t_probe: float
    centre: float
    z: np.ndarray
    values: np.ndarray
    shift: float  # position of the lambda*/2 crossing relative to m(t)

    def matched_error(self, wave: TravelingWave, z_lo: float = -3.0, z_hi: float = 5.0) -> float:
        sel = (self.z >= z_lo) & (self.z <= z_hi)
        return float(np.max(np.abs(self.values[sel] - wave(self.z[sel] - self.shift))))

    def as_wave_table(self):
        """Profile translated so its lambda*/2 crossing sits at 0."""
        return self.z - self.shift, self.values


def extract_wave_limit(
    u_field: SpaceTimeField,
    consts: DerivedConstants,
    alpha: float,
    t_probe: float,
    z_window=(-10.0, 10.0),
) -> WaveEstimate:
    """u(t_probe, m(t_probe) + z) on the grid's own z spacing."""
    centre = float(centering(alpha, t_probe))
    x_nodes, vals = u_field.snapshot(t_probe)
    z_lo, z_hi = z_window
    if centre + z_lo < x_nodes[0] or centre + z_hi > x_nodes[-1]:
        raise GridError("wave window exits the grid")
    dz = x_nodes[1] - x_nodes[0]
    z = np.arange(z_lo, z_hi + 0.5 * dz, dz)
    values = np.asarray(u_field.at(t_probe, centre + z))
    shift = level_crossing(z, values, 0.5 * consts.lambda_star)
    return WaveEstimate(t_probe, centre, z, values, shift)
