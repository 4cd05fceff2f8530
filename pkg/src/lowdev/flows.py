"""Exact flows of the space-homogeneous reaction ODE x' = -psi(x).

Two coordinates are used throughout:

* the full level ``u`` in [0, inf], flowing by u' = -psi(u);
* the shifted level ``y = u - lambda*`` in [0, inf], flowing by
  y' = -psi(lambda* + y).  Keeping ``y`` separate preserves relative
  precision when y is tiny.

``inf`` is a legal input: it stands for blow-up data and is mapped to the
solution that comes down from infinity (this needs the Grey condition).
Quadratic mechanisms use closed forms; other mechanisms use a tabulated
time function inverted with cubic Hermite interpolation.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline
from scipy.special import expit

from .mechanism import (
    BranchingMechanism,
    DerivedConstants,
    MechanismError,
    TriState,
    eval_psi,
    psi_shifted,
    taylor_remainder,
    validate_hypotheses,
)


def _gauss_panels(fun, nodes: np.ndarray, order: int = 8) -> np.ndarray:
    """Integral of ``fun`` over each panel [nodes[i], nodes[i+1]]."""
    gx, gw = np.polynomial.legendre.leggauss(order)
    left, right = nodes[:-1], nodes[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    pts = mid[:, None] + half[:, None] * gx[None, :]
    return (fun(pts) * gw[None, :]).sum(axis=1) * half


class ReactionFlow:
    """Common interface; use :func:`make_flow` to build one."""

    def __init__(self, mech: BranchingMechanism, consts: DerivedConstants):
        self.mech = mech
        self.consts = consts

    # subclasses implement the next four
    def shifted(self, y, h: float):
        raise NotImplementedError

    def full(self, u, h: float):
        raise NotImplementedError

    def time_from_infinity(self, y):
        """Time taken by the shifted flow to come down from inf to y."""
        raise NotImplementedError

    def from_infinity(self, t):
        """Shifted level reached at time t when started at inf, i.e. k(t)."""
        raise NotImplementedError

    def gap(self, y, c, h: float):
        """Phi_h(a) - Phi_h(a - c) for a = lambda* + y and 0 <= c <= a.

        Phi is the full flow.  Small gaps are computed from the flow
        derivative so that the result keeps relative precision.
        """
        y = np.asarray(y, dtype=float)
        c = np.asarray(c, dtype=float)
        ls = self.consts.lambda_star
        a = ls + y
        out = np.zeros(np.broadcast(y, c).shape)
        finite = np.isfinite(a) & (c > 0)
        big = finite & (c >= 1e-5 * a)
        if np.any(big):
            ab, cb = np.broadcast_to(a, out.shape)[big], np.broadcast_to(c, out.shape)[big]
            yb = np.broadcast_to(y, out.shape)[big]
            out[big] = (ls + self.shifted(yb, h)) - self.full(ab - cb, h)
        small = finite & ~big
        if np.any(small):
            ys = np.broadcast_to(y, out.shape)[small]
            cs = np.broadcast_to(c, out.shape)[small]
            d1, d2 = self.flow_derivatives(ys, h)
            out[small] = cs * d1 - 0.5 * cs * cs * d2
        return out

    def flow_derivatives(self, y, h: float):
        """First and second derivative of Phi_h at lambda* + y."""
        mech, consts = self.mech, self.consts
        ls = consts.lambda_star
        yh = self.shifted(y, h)
        d1 = np.exp(self.log_rate_ratio(y, yh, h))
        psi_y = psi_shifted(mech, consts, y)
        with np.errstate(invalid="ignore", divide="ignore"):
            slope_gap = eval_psi(mech, ls + yh, 1) - eval_psi(mech, ls + y, 1)
            d2 = np.where(psi_y > 0, d1 * slope_gap / psi_y, 0.0)
        # At y = 0 the quotient is 0/0; its limit follows from linearisation.
        zero = ~(psi_y > 0)
        if np.any(zero):
            q = consts.q
            curv = eval_psi(mech, ls, 2)
            e = math.exp(-q * h)
            d2 = np.where(zero, curv * e * (e - 1.0) / q, d2)
        return d1, d2

    def log_rate_ratio(self, y0, yh, h: float):
        """log psi(lambda*+yh) - log psi(lambda*+y0), exact along one flow step."""
        mech, consts = self.mech, self.consts
        q = consts.q
        y0 = np.asarray(y0, dtype=float)
        yh = np.asarray(yh, dtype=float)
        pos = y0 > 0
        safe0 = np.where(pos, y0, 1.0)
        safeh = np.where(pos, yh, 1.0)
        f0 = np.log(psi_shifted(mech, consts, safe0) / safe0)
        fh = np.log(psi_shifted(mech, consts, safeh) / safeh)
        with np.errstate(divide="ignore"):
            ratio = np.log(safeh) - np.log(safe0) + fh - f0
        return np.where(pos, ratio, -q * h)


class QuadraticFlow(ReactionFlow):
    """Closed-form flows for psi(u) = -alpha u + b u^2."""

    def __init__(self, mech, consts):
        super().__init__(mech, consts)
        self.b = mech.quadratic_coefficient
        self.alpha = mech.alpha

    def full(self, u, h):
        u = np.asarray(u, dtype=float)
        a, b = self.alpha, self.b
        grow = math.exp(a * h)
        k = b / a * math.expm1(a * h)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = u * grow / (1.0 + k * u)
        return np.where(np.isinf(u), grow / k, out)

    def shifted(self, y, h):
        y = np.asarray(y, dtype=float)
        q, b = self.consts.q, self.b
        decay = math.exp(-q * h)
        k = b / q * -math.expm1(-q * h)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = y * decay / (1.0 + k * y)
        return np.where(np.isinf(y), decay / k, out)

    def gap(self, y, c, h):
        y = np.asarray(y, dtype=float)
        c = np.asarray(c, dtype=float)
        a = self.consts.lambda_star + y
        grow = math.exp(self.alpha * h)
        k = self.b / self.alpha * math.expm1(self.alpha * h)
        with np.errstate(invalid="ignore", over="ignore"):
            out = grow * c / ((1.0 + k * a) * (1.0 + k * (a - c)))
        return np.where(np.isfinite(a), out, 0.0)

    def time_from_infinity(self, y):
        y = np.asarray(y, dtype=float)
        q, b = self.consts.q, self.b
        with np.errstate(divide="ignore"):
            return np.log1p(q / (b * y)) / q

    def from_infinity(self, t):
        t = np.asarray(t, dtype=float)
        q, b = self.consts.q, self.b
        with np.errstate(divide="ignore"):
            return q / (b * np.expm1(q * t))


class TabulatedFlow(ReactionFlow):
    """Flows for general mechanisms through tabulated time functions."""

    def __init__(self, mech, consts, log_lo: float = -40.0, log_hi: float = 40.0, step: float = 0.005):
        super().__init__(mech, consts)
        self.log_lo, self.log_hi, self.step = log_lo, log_hi, step

    # shifted coordinate: Y = log y, time from infinity tau(Y) decreasing
    def _kappa_upper(self, log_y):
        y = np.exp(log_y)
        return y / psi_shifted(self.mech, self.consts, y)

    @cached_property
    def _upper(self):
        grid = np.arange(self.log_lo, self.log_hi + 0.5 * self.step, self.step)
        y_hi = math.exp(grid[-1])
        tail = self._tail_time(y_hi)
        panels = _gauss_panels(self._kappa_upper, grid)
        tau = tail + np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
        kappa = self._kappa_upper(grid)
        # invert: Y as a function of -tau (increasing)
        spline = CubicHermiteSpline(-tau, grid, 1.0 / kappa)
        return grid, tau, spline

    def _tail_time(self, y_start: float) -> float:
        # substitute mu = y_start / s to map [y_start, inf) onto (0, 1]
        def integrand(s):
            if s == 0.0:
                return 0.0
            mu = y_start / s
            return y_start / (s * s * psi_shifted(self.mech, self.consts, mu))

        value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
        return value

    def _tau_of_y(self, y):
        grid, tau, _ = self._upper
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        inf = np.isinf(y)
        zero = y <= 0
        with np.errstate(divide="ignore"):
            log_y = np.log(np.where(zero | inf, 1.0, y))
        inside = ~(inf | zero) & (log_y <= grid[-1]) & (log_y >= grid[0])
        below = ~(inf | zero) & (log_y < grid[0])
        above = ~(inf | zero) & (log_y > grid[-1])
        if np.any(inside):
            out[inside] = self._tau_inside(log_y[inside])
        out[below] = tau[0] + (grid[0] - log_y[below]) / self.consts.q
        if np.any(above):
            out[above] = [self._tail_time(v) for v in y[above]]
        out[inf] = 0.0
        out[zero] = np.inf
        return out

    def _tau_inside(self, log_y):
        grid, tau, _ = self._upper
        idx = np.clip(((log_y - grid[0]) / self.step).astype(int), 0, len(grid) - 2)
        # integrate kappa from the sample point to the right panel edge exactly enough
        gx, gw = np.polynomial.legendre.leggauss(8)
        half = 0.5 * (grid[idx + 1] - log_y)
        mid = 0.5 * (grid[idx + 1] + log_y)
        pts = mid[:, None] + half[:, None] * gx[None, :]
        part = (self._kappa_upper(pts) * gw).sum(axis=1) * half
        return tau[idx + 1] + part

    def _y_of_tau(self, t):
        grid, tau, spline = self._upper
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        inside = (t >= tau[-1]) & (t <= tau[0])
        out[inside] = np.exp(spline(-t[inside]))
        late = t > tau[0]
        out[late] = np.exp(grid[0] - self.consts.q * (t[late] - tau[0]))
        early = t < tau[-1]
        if np.any(early):
            out[early] = [self._invert_tail(v) for v in t[early]]
        out[np.isinf(t)] = 0.0
        return out

    def _invert_tail(self, t):
        from scipy.optimize import brentq

        if t <= 0:
            return np.inf
        lo = math.exp(self.log_hi)
        hi = lo
        while self._tau_of_y(np.array([hi]))[0] > t:
            hi *= 10.0
            if hi > 1e300:
                return np.inf
        return brentq(lambda v: self._tau_of_y(np.array([v]))[0] - t, lo, hi, rtol=1e-14)

    def time_from_infinity(self, y):
        return self._tau_of_y(y)

    def from_infinity(self, t):
        return self._y_of_tau(t)

    def shifted(self, y, h):
        y = np.asarray(y, dtype=float)
        return self._y_of_tau(self._tau_of_y(y) + h)

    # lower branch: u in (0, lambda*), Z = log(d / u) with d = lambda* - u
    def _kappa_lower(self, z):
        ls, q, alpha = self.consts.lambda_star, self.consts.q, self.mech.alpha
        d = ls * expit(z)
        u = ls * expit(-z)
        # -psi(u) / d near u = lambda*, -psi(u) / u near u = 0, both cancellation free
        near_top = (q - taylor_remainder(self.mech, ls, -d) / d) / u
        near_zero = (alpha - taylor_remainder(self.mech, 0.0, u) / u) / d
        return ls * np.where(z < 0, near_top, near_zero)

    @cached_property
    def _lower(self):
        grid = np.arange(-45.0, 45.0 + 0.5 * self.step, self.step)
        panels = _gauss_panels(self._kappa_lower_inv, grid)
        s = np.concatenate([[0.0], np.cumsum(panels)])
        spline = CubicHermiteSpline(s, grid, self._kappa_lower(grid))
        return grid, s, spline

    def _kappa_lower_inv(self, z):
        return 1.0 / self._kappa_lower(z)

    def _lower_flow(self, u, h):
        ls, q, alpha = self.consts.lambda_star, self.consts.q, self.mech.alpha
        grid, s, spline = self._lower
        with np.errstate(divide="ignore"):
            z = np.log((ls - u) / u)
        idx = np.clip(((z - grid[0]) / self.step).astype(int), 0, len(grid) - 2)
        gx, gw = np.polynomial.legendre.leggauss(8)
        zc = np.clip(z, grid[0], grid[-1])
        half = 0.5 * (zc - grid[idx])
        mid = 0.5 * (zc + grid[idx])
        pts = mid[:, None] + half[:, None] * gx[None, :]
        sv = s[idx] + (self._kappa_lower_inv(pts) * gw).sum(axis=1) * half
        sv = np.where(z > grid[-1], s[-1] + (z - grid[-1]) / alpha, sv)
        sv = np.where(z < grid[0], s[0] + (z - grid[0]) / q, sv)
        target = sv - h
        z_new = np.where(
            target < s[0],
            grid[0] + (target - s[0]) * q,
            np.where(target > s[-1], grid[-1] + (target - s[-1]) * alpha, spline(np.clip(target, s[0], s[-1]))),
        )
        return ls / (1.0 + np.exp(z_new))

    def full(self, u, h):
        u = np.asarray(u, dtype=float)
        ls = self.consts.lambda_star
        out = u.copy()
        above = u > ls
        if np.any(above):
            out[above] = ls + self.shifted(u[above] - ls, h)
        below = (u > 0) & (u < ls)
        if np.any(below):
            out[below] = self._lower_flow(u[below], h)
        return out


def make_flow(mech: BranchingMechanism, consts: DerivedConstants) -> ReactionFlow:
    """Exact reaction flow; refuses mechanisms without the Grey condition."""
    if validate_hypotheses(mech).grey_ok is not TriState.HOLDS:
        raise MechanismError(
            "mechanism violates the Grey condition; blow-up data never comes down from infinity"
        )
    if mech.is_quadratic:
        return QuadraticFlow(mech, consts)
    return TabulatedFlow(mech, consts)
