"""Branching mechanisms and the constants derived from them.

A mechanism is psi(lam) = -alpha*lam + beta*lam**2 + (Levy part), with the
Levy part drawn from one of two parametric families:

* ``Stable(theta, scale)`` contributes ``scale * lam**(1 + theta)``.  For
  theta < 1 this is the Levy density ``scale / Gamma(-1 - theta) * y**(-2 - theta)``;
  theta = 1 is the degenerate quadratic limit and acts as extra ``beta``.
* ``DiscreteAtoms`` contributes ``sum_i w_i (exp(-lam y_i) - 1 + lam y_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize, special


class MechanismError(ValueError):
    """Raised for invalid mechanisms or failed root searches."""


@dataclass(frozen=True)
class Stable:
    theta: float
    scale: float

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise MechanismError(f"stable index theta must lie in (0, 1], got {self.theta}")
        if not self.scale > 0.0:
            raise MechanismError(f"stable scale must be > 0, got {self.scale}")

    @property
    def power(self) -> float:
        return 1.0 + self.theta

    @property
    def levy_density_constant(self) -> float:
        """Constant C in n(dy) = C y^(-2-theta) dy giving scale*lam^(1+theta)."""
        if self.theta == 1.0:
            return 0.0
        return self.scale / special.gamma(-1.0 - self.theta)


@dataclass(frozen=True)
class DiscreteAtoms:
    atoms: tuple  # ((y, w), ...)

    def __init__(self, atoms: Sequence[Sequence[float]]):
        cleaned = tuple((float(y), float(w)) for y, w in atoms)
        if not cleaned:
            raise MechanismError("DiscreteAtoms needs at least one atom")
        for y, w in cleaned:
            if not y > 0.0:
                raise MechanismError(f"atom mass y must be > 0, got {y}")
            if not w > 0.0:
                raise MechanismError(f"atom weight must be > 0, got {w}")
        object.__setattr__(self, "atoms", cleaned)

    @property
    def masses(self) -> np.ndarray:
        return np.array([y for y, _ in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms])


LevyPart = Optional[Union[Stable, DiscreteAtoms]]


@dataclass(frozen=True)
class BranchingMechanism:
    alpha: float
    beta: float = 0.0
    levy_part: LevyPart = None

    def __post_init__(self):
        problems = mechanism_problems(self.alpha, self.beta, self.levy_part)
        if problems:
            raise MechanismError("; ".join(problems))

    @property
    def is_quadratic(self) -> bool:
        """True when psi is exactly -alpha*lam + b*lam^2."""
        return self.levy_part is None or (
            isinstance(self.levy_part, Stable) and self.levy_part.theta == 1.0
        )

    @property
    def quadratic_coefficient(self) -> float:
        """Total coefficient of lam^2 (beta plus a theta=1 stable part)."""
        extra = 0.0
        if isinstance(self.levy_part, Stable) and self.levy_part.theta == 1.0:
            extra = self.levy_part.scale
        return self.beta + extra

    def psi(self, lam, order: int = 0):
        return eval_psi(self, lam, order)

    def to_dict(self) -> dict:
        out = {"alpha": self.alpha, "beta": self.beta}
        lp = self.levy_part
        if lp is None:
            out["levy"] = "none"
        elif isinstance(lp, Stable):
            out["levy"] = {"stable": {"theta": lp.theta, "scale": lp.scale}}
        else:
            out["levy"] = {"atoms": [[y, w] for y, w in lp.atoms]}
        return out


def mechanism_problems(alpha, beta, levy_part) -> list[str]:
    """List every violated mechanism invariant (empty when valid)."""
    problems = []
    if not (isinstance(alpha, (int, float)) and math.isfinite(alpha) and alpha > 0):
        problems.append(f"alpha must be a finite real > 0 (supercritical), got {alpha!r}")
    if not (isinstance(beta, (int, float)) and math.isfinite(beta) and beta >= 0):
        problems.append(f"beta must be a finite real >= 0, got {beta!r}")
    if levy_part is not None and not isinstance(levy_part, (Stable, DiscreteAtoms)):
        problems.append(f"unsupported levy part {levy_part!r}")
    if not problems and beta == 0 and levy_part is None:
        problems.append("need beta > 0 or a Levy part so that psi(lam) -> infinity")
    return problems


# ---------------------------------------------------------------------------
# evaluation


def _check_nonnegative(lam):
    arr = np.asarray(lam)
    if np.iscomplexobj(arr):
        return arr
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise MechanismError("psi is only defined for lambda >= 0")
    return arr


def _levy_psi(levy: LevyPart, lam, order: int):
    if levy is None:
        return 0.0
    if isinstance(levy, Stable):
        p = levy.power
        if order == 0:
            return levy.scale * lam**p
        if order == 1:
            return levy.scale * p * lam**levy.theta
        if levy.theta == 1.0:
            return levy.scale * 2.0 * np.ones_like(lam)
        with np.errstate(divide="ignore"):
            return levy.scale * p * levy.theta * lam ** (levy.theta - 1.0)
    y = levy.masses
    w = levy.weights
    lam_e = np.asarray(lam)[..., None]
    if order == 0:
        return np.sum(w * (np.expm1(-lam_e * y) + lam_e * y), axis=-1)
    if order == 1:
        return np.sum(w * y * -np.expm1(-lam_e * y), axis=-1)
    return np.sum(w * y * y * np.exp(-lam_e * y), axis=-1)


def eval_psi(mech: BranchingMechanism, lam, order: int = 0):
    """psi, psi' or psi'' at ``lam`` (scalar or array, lam >= 0)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    lam = _check_nonnegative(lam)
    a, b = mech.alpha, mech.beta
    if order == 0:
        base = -a * lam + b * lam * lam
    elif order == 1:
        base = -a + 2.0 * b * lam
    else:
        base = 2.0 * b * np.ones_like(lam, dtype=float if not np.iscomplexobj(lam) else complex)
    out = base + _levy_psi(mech.levy_part, lam, order)
    if np.ndim(out) == 0:
        return out.item() if hasattr(out, "item") else out
    return out


def _binomial_series_remainder(p: float, x):
    """(1+x)^p - 1 - p x via its binomial series (|x| small)."""
    term = np.full_like(x, p * (p - 1.0) / 2.0) * x * x
    total = term.copy()
    for k in range(3, 40):
        term = term * (p - k + 1.0) / k * x
        total = total + term
    return total


def taylor_remainder(mech: BranchingMechanism, base, step):
    """psi(base + step) - psi(base) - psi'(base) * step, without cancellation.

    Requires base >= 0 and base + step >= 0.  The linear part of psi drops out
    exactly, so the result is accurate in relative terms even for tiny steps.
    """
    base = np.asarray(base, dtype=float)
    step = np.asarray(step, dtype=float)
    base, step = np.broadcast_arrays(base, step)
    out = mech.beta * step * step
    lp = mech.levy_part
    if isinstance(lp, Stable):
        p = lp.power
        if lp.theta == 1.0:
            out = out + lp.scale * step * step
        else:
            safe = np.where(base > 0, base, 1.0)
            x = step / safe
            small = (base > 0) & (np.abs(x) < 0.1)
            with np.errstate(invalid="ignore", divide="ignore"):
                direct = (base + step) ** p - base**p - p * base ** (p - 1.0) * step
                direct = np.where(base > 0, direct, np.abs(step) ** p)
            series = safe**p * _binomial_series_remainder(p, np.where(small, x, 0.0))
            out = out + lp.scale * np.where(small, series, direct)
    elif isinstance(lp, DiscreteAtoms):
        for y, w in lp.atoms:
            z = -step * y
            small = np.abs(z) < 1e-2
            zs = np.where(small, z, 0.0)
            series = zs * zs / 2.0 * (1 + zs / 3.0 * (1 + zs / 4.0 * (1 + zs / 5.0 * (1 + zs / 6.0 * (1 + zs / 7.0)))))
            direct = np.expm1(z) - z
            out = out + w * np.exp(-base * y) * np.where(small, series, direct)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# derived constants


@dataclass(frozen=True)
class DerivedConstants:
    lambda_star: float
    q: float
    rho: float
    extinction_prob: float
    survival_factor: float


def wave_speed(mech: BranchingMechanism) -> float:
    return math.sqrt(2.0 * mech.alpha)


def solve_lambda_star(mech: BranchingMechanism, upper_bound: float = 1e12) -> DerivedConstants:
    """Largest root of psi and the constants built on it."""
    psi = lambda x: eval_psi(mech, x)
    lo = 1e-12
    if psi(lo) >= 0:
        raise MechanismError("mechanism not supercritical or unbounded search: psi(0+) >= 0")
    hi = 1.0
    while psi(hi) <= 0:
        lo = hi
        hi *= 2.0
        if hi > upper_bound:
            raise MechanismError("mechanism not supercritical or unbounded search")
    root = optimize.brentq(psi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    slope = eval_psi(mech, root, 1)
    if slope > 0:
        polished = root - psi(root) / slope
        if lo <= polished <= hi and abs(psi(polished)) <= abs(psi(root)):
            root = polished
    q = eval_psi(mech, root, 1)
    if not q > 0:
        raise MechanismError(f"psi'(lambda*) = {q} is not positive")
    rho = math.sqrt(1.0 + q / mech.alpha)
    return DerivedConstants(
        lambda_star=float(root),
        q=float(q),
        rho=rho,
        extinction_prob=math.exp(-root),
        survival_factor=root / math.expm1(root),
    )


# ---------------------------------------------------------------------------
# skeleton offspring law


@dataclass(frozen=True)
class OffspringLaw:
    probabilities: np.ndarray  # p_n for n = 2..n_max
    truncation_mass: float

    @property
    def n_max(self) -> int:
        return len(self.probabilities) + 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(2, self.n_max + 1)

    def resolved(self) -> np.ndarray:
        """Probabilities with the truncated tail reassigned to n_max."""
        p = np.array(self.probabilities, dtype=float)
        p[-1] += self.truncation_mass
        return p / p.sum()

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        powers = s[..., None] ** self.support
        return powers @ self.probabilities

    @property
    def is_binary(self) -> bool:
        return self.probabilities[0] == 1.0 and self.truncation_mass == 0.0


def skeleton_pgf(mech: BranchingMechanism, consts: DerivedConstants, s):
    """phi(s) = s + psi(lambda*(1 - s)) / (lambda* q); accepts complex s."""
    ls, q = consts.lambda_star, consts.q
    return s + eval_psi(mech, ls * (1.0 - s)) / (ls * q)


def offspring_distribution(
    mech: BranchingMechanism, consts: DerivedConstants, n_max: int = 50
) -> OffspringLaw:
    """Power-series coefficients of the skeleton generating function."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    probs = np.zeros(n_max - 1)
    if mech.is_quadratic:
        probs[0] = 1.0
        return OffspringLaw(probs, 0.0)
    # Cauchy coefficients on a circle close enough to 1 that r^-n stays tame.
    radius = max(0.5, 10.0 ** (-3.0 / n_max))
    n_nodes = 16 * n_max
    s = radius * np.exp(2j * np.pi * np.arange(n_nodes) / n_nodes)
    coeffs = np.fft.fft(skeleton_pgf(mech, consts, s)) / n_nodes
    coeffs = coeffs.real[: n_max + 1] / radius ** np.arange(n_max + 1)
    raw = coeffs[2:]
    if np.any(raw < -1e-9):
        bad = int(np.argmin(raw)) + 2
        raise MechanismError(f"invalid generating function: p_{bad} = {raw[bad - 2]:.3e}")
    probs = np.clip(raw, 0.0, None)
    probs[np.abs(raw) < 1e-15] = 0.0
    tail = max(0.0, 1.0 - probs.sum())
    return OffspringLaw(probs, tail)


# ---------------------------------------------------------------------------
# scalar functions


def big_a(consts: DerivedConstants, mech: BranchingMechanism, lam):
    """A(lam) = psi(lam)/lambda* + q (1 - lam/lambda*)."""
    ls = consts.lambda_star
    lam_arr = np.asarray(lam, dtype=float)
    # psi(lam) = psi(ls) + q (lam - ls) + R, so A = R / ls exactly.
    value = taylor_remainder(mech, ls, lam_arr - ls) / ls
    return value


def little_phi(consts: DerivedConstants, mech: BranchingMechanism, lam):
    """phi(lam) = psi'(lam + lambda*) - q."""
    lam = _check_nonnegative(lam)
    return eval_psi(mech, np.asarray(lam) + consts.lambda_star, 1) - consts.q


def psi_shifted(mech: BranchingMechanism, consts: DerivedConstants, y):
    """psi(lambda* + y) accurate in relative terms as y -> 0."""
    return consts.q * np.asarray(y, dtype=float) + taylor_remainder(mech, consts.lambda_star, y)


def hat_g_kernel(mech: BranchingMechanism, consts: DerivedConstants, u_star, v):
    """(1/lambda*)[psi(a - c) - psi(a) + psi'(a) c] with a = lambda*+u*, c = lambda* v."""
    ls = consts.lambda_star
    a = ls + np.asarray(u_star, dtype=float)
    c = ls * np.asarray(v, dtype=float)
    return taylor_remainder(mech, a, -c) / ls


# ---------------------------------------------------------------------------
# hypotheses


class TriState(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    NOT_CHECKABLE = "not-checkable"


@dataclass(frozen=True)
class HypothesisReport:
    log_moment_ok: TriState
    power_growth_ok: TriState
    grey_ok: TriState
    power_growth_witness: Optional[tuple] = None  # (vartheta, a, b)
    notes: tuple = field(default_factory=tuple)


def validate_hypotheses(mech: BranchingMechanism) -> HypothesisReport:
    lp = mech.levy_part
    notes = []
    # Neither family has a heavy tail beyond y^(-2-theta), so the log moment is finite.
    log_moment = TriState.HOLDS
    witness = None
    if mech.quadratic_coefficient > 0:
        witness = (1.0, mech.alpha, mech.quadratic_coefficient)
    elif isinstance(lp, Stable):
        witness = (lp.theta, mech.alpha, lp.scale)
    if witness is not None:
        return HypothesisReport(log_moment, TriState.HOLDS, TriState.HOLDS, witness, tuple(notes))
    # Only atoms: psi grows linearly, so no power lower bound can be certified.
    notes.append("atoms-only psi grows linearly; integral of 1/psi diverges")
    return HypothesisReport(log_moment, TriState.NOT_CHECKABLE, TriState.FAILS, None, tuple(notes))


def grey_integral(mech: BranchingMechanism, consts: DerivedConstants, start: float) -> float:
    """Integral of 1/psi over [start, inf); start must exceed lambda*."""
    if start <= consts.lambda_star:
        raise ValueError("start must exceed lambda*")
    value, _ = integrate.quad(lambda x: 1.0 / eval_psi(mech, x), start, np.inf, limit=200)
    return value
