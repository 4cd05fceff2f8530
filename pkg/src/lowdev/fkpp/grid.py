"""Grid, field and test-function types shared by the PDE solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

FIELD_KINDS = ("u", "u_star", "v", "g_hat", "g", "v_scaled", "bbm_cdf", "sbm_u")


class GridError(ValueError):
    pass


class NumericalError(RuntimeError):
    """Solver instability; carries the first offending (t, x)."""

    def __init__(self, message: str, t: float = math.nan, x: float = math.nan):
        super().__init__(f"{message} at t={t:.6g}, x={x:.6g}")
        self.t = t
        self.x = x


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) < 1e-8 * max(1.0, abs(ratio))


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid in the barrier frame.

    Nodes sit at cell centres x_min + (i + 1/2) dx, so the barrier x = 0 falls
    on a cell face whenever x_min is a multiple of dx.
    """

    x_min: float
    x_max: float
    dx: float
    dt: float
    t_max: float
    moving_window: bool = False

    def __post_init__(self):
        problems = []
        if not self.dx > 0:
            problems.append("dx must be > 0")
        if not self.dt > 0:
            problems.append("dt must be > 0")
        if not self.t_max > 0:
            problems.append("t_max must be > 0")
        if self.x_max <= self.x_min:
            problems.append("x_max must exceed x_min")
        if not problems:
            if self.dt > self.dx:
                problems.append("dt must not exceed dx")
            if not _is_multiple(self.x_max - self.x_min, self.dx):
                problems.append("(x_max - x_min)/dx must be an integer")
            if not _is_multiple(self.x_min, self.dx):
                problems.append("x_min must be a multiple of dx so the barrier sits on a cell face")
            if not _is_multiple(self.t_max, self.dt):
                problems.append("t_max must be a multiple of dt")
        if problems:
            raise GridError("; ".join(problems))

    @property
    def n_cells(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def refined(self) -> "GridSpec":
        """Same window with dx and dt halved."""
        return GridSpec(self.x_min, self.x_max, self.dx / 2, self.dt / 2, self.t_max, self.moving_window)

    def header(self) -> str:
        return f"{self.x_min!r} {self.x_max!r} {self.dx!r} {self.dt!r} {self.t_max!r}"


def default_grid(alpha: float, t_max: float, dx: float = 0.05, dt: float = 0.01,
                 left: float = 20.0, right: float = 20.0) -> GridSpec:
    """Fixed window from -left to the front position plus ``right``."""
    front = math.sqrt(2.0 * alpha) * t_max
    x_min = -math.ceil(left / dx) * dx
    x_max = math.ceil((front + right) / dx) * dx
    t_max = math.ceil(t_max / dt - 1e-9) * dt
    return GridSpec(x_min, x_max, dx, dt, t_max)


def _local_cubic(x_nodes: np.ndarray, values: np.ndarray, x) -> np.ndarray:
    """Four-point Lagrange interpolation on a uniform grid."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x0, h = x_nodes[0], x_nodes[1] - x_nodes[0]
    n = len(x_nodes)
    pos = (x - x0) / h
    i = np.clip(np.floor(pos).astype(int) - 1, 0, n - 4)
    s = pos - i
    out = np.zeros_like(x)
    for j in range(4):
        weight = np.ones_like(x)
        for m in range(4):
            if m != j:
                weight *= (s - m) / (j - m)
        out += weight * values[i + j]
    return out


@dataclass
class SpaceTimeField:
    grid: GridSpec
    times: np.ndarray
    offsets: np.ndarray  # cell shift of the window at each snapshot
    values: np.ndarray  # (n_snapshots, n_cells)
    field_kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.field_kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.field_kind!r}")

    def nodes(self, index: int) -> np.ndarray:
        return self.grid.nodes + self.offsets[index] * self.grid.dx

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 0.5 * self.grid.dt + 1e-12:
            raise KeyError(f"no snapshot stored at t={t}")
        return i

    def snapshot(self, t: float):
        i = self.index_of(t)
        return self.nodes(i), self.values[i]

    def at(self, t: float, x, log: bool = False):
        """Value at (t, x) by local cubic interpolation (in log scale if asked)."""
        xs, vals = self.snapshot(t)
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr < xs[0]) or np.any(x_arr > xs[-1]):
            raise GridError(f"probe x outside the window [{xs[0]}, {xs[-1]}] at t={t}")
        if log:
            with np.errstate(divide="ignore"):
                out = np.exp(_local_cubic(xs, np.log(vals), x_arr))
        else:
            out = _local_cubic(xs, vals, x_arr)
        return out if np.ndim(x) else float(out[0])

    def with_values(self, values: np.ndarray, field_kind: str) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times, self.offsets, values, field_kind, dict(self.meta))


@dataclass(frozen=True)
class TestFunction:
    """Non-negative test function f on (-inf, 0].

    kind ``zero``; ``step`` with height on [a, b], b <= 0; ``table`` with
    samples (y_i <= 0, f_i) linearly interpolated and zero outside.
    """

    __test__ = False  # not a pytest class

    kind: str = "zero"
    height: float = 0.0
    support: tuple = (0.0, 0.0)
    samples: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("zero", "step", "table"):
            raise ValueError(f"unknown test-function kind {self.kind!r}")
        if self.kind == "step":
            a, b = self.support
            if not (self.height >= 0 and math.isfinite(self.height)):
                raise ValueError("step height must be finite and >= 0")
            if not (a <= b <= 0):
                raise ValueError("step support [a, b] needs a <= b <= 0")
        if self.kind == "table":
            ys, fs = np.asarray(self.samples[0], float), np.asarray(self.samples[1], float)
            if np.any(ys > 0) or np.any(fs < 0) or not np.all(np.isfinite(fs)):
                raise ValueError("table samples need y <= 0 and finite f >= 0")

    @classmethod
    def zero(cls) -> "TestFunction":
        return cls("zero")

    @classmethod
    def step(cls, height: float, a: float, b: float) -> "TestFunction":
        return cls("step", float(height), (float(a), float(b)))

    @classmethod
    def table(cls, ys, fs) -> "TestFunction":
        order = np.argsort(ys)
        return cls("table", samples=(tuple(np.asarray(ys, float)[order]), tuple(np.asarray(fs, float)[order])))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(y)
        if self.kind == "step":
            a, b = self.support
            return np.where((y >= a) & (y <= b), self.height, 0.0)
        ys, fs = np.asarray(self.samples[0]), np.asarray(self.samples[1])
        return np.interp(y, ys, fs, left=0.0, right=0.0)

    @property
    def sup(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "step":
            return self.height
        return float(max(self.samples[1]))

    def weighted_moment(self, alpha: float) -> float:
        """int_0^inf y e^{sqrt(2 alpha) y} f(-y) dy (finite for these kinds)."""
        c = math.sqrt(2.0 * alpha)
        if self.kind == "zero":
            return 0.0
        if self.kind == "step":
            lo, hi = -self.support[1], -self.support[0]
            g = lambda y: (y / c - 1.0 / c**2) * math.exp(c * y)
            return self.height * (g(hi) - g(lo))
        ys = -np.asarray(self.samples[0])[::-1]
        fs = np.asarray(self.samples[1])[::-1]
        fine = np.linspace(ys[0], ys[-1], 20001)
        return float(trapezoid(fine * np.exp(c * fine) * np.interp(fine, ys, fs), fine))

    @property
    def has_finite_weighted_moment(self) -> bool:
        return math.isfinite(self.weighted_moment(1.0))

    def initial_data(self, x: np.ndarray) -> np.ndarray:
        """f(-x) for x >= 0; +inf for x < 0 (blow-up barrier data)."""
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, np.inf, self(-np.abs(x)))
