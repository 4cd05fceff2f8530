"""Lower-deviation asymptotics of the front: regimes, rates, prefactors, trends.

For delta < 1 the probability of {M_t <= sqrt(2 alpha) delta t} given
survival behaves like  prefactor * t^poly_exponent * exp(-rate t), with three
regimes split at delta = 1 - rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import mpmath
import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.special import gamma, log_ndtr

from .fkpp.grid import SpaceTimeField
from .fkpp.wave import TravelingWave, WaveEstimate, centering, traveling_wave
from .mechanism import BranchingMechanism, DerivedConstants, big_a

TIE_TOLERANCE = 1e-9
V_FLOOR = 1e-290


class DeviationError(ValueError):
    pass


@dataclass(frozen=True)
class RegimeClassification:
    delta: float
    regime: str  # shallow | critical | deep
    rho: float
    a_delta: Optional[float] = None


def classify(consts: DerivedConstants, delta: float, tie_tolerance: float = TIE_TOLERANCE) -> RegimeClassification:
    if not delta < 1:
        raise DeviationError("delta >= 1 is an upper deviation and is not handled here")
    boundary = 1.0 - consts.rho
    if abs(delta - boundary) < tie_tolerance:
        return RegimeClassification(delta, "critical", consts.rho)
    if delta > boundary:
        return RegimeClassification(delta, "shallow", consts.rho, 1.0 - (1.0 - delta) / consts.rho)
    return RegimeClassification(delta, "deep", consts.rho)


def exponents(alpha: float, q: float, rho: float, cls: RegimeClassification) -> tuple[float, float]:
    """(rate, poly_exponent) of the regime."""
    if cls.regime == "shallow":
        return 2.0 * alpha * (rho - 1.0) * (1.0 - cls.delta), 1.5 * (rho - 1.0)
    if cls.regime == "critical":
        return q + alpha * (rho - 1.0) ** 2, 0.75 * (rho - 1.0)
    return q + alpha * cls.delta**2, -0.5


@dataclass
class AsymptoticLaw:
    regime: str
    rate: float
    poly_exponent: float
    prefactor: Optional[float]  # None when not computed
    prefactor_breakdown: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def log_scaled_target(self) -> Optional[float]:
        """log(prefactor / survival_factor), the limit of the scaled v-sequence."""
        if self.prefactor is None:
            return None
        return math.log(self.prefactor / self.prefactor_breakdown["survival_factor"])


def rates(mech: BranchingMechanism, consts: DerivedConstants, deltas) -> list[dict]:
    rows = []
    for d in deltas:
        cls = classify(consts, float(d))
        rate, poly = exponents(mech.alpha, consts.q, consts.rho, cls)
        rows.append({"delta": float(d), "regime": cls.regime, "rate": rate, "poly_exponent": poly,
                     "a_delta": cls.a_delta})
    return rows


# ---------------------------------------------------------------- prefactors

def wave_integral(mech: BranchingMechanism, consts: DerivedConstants, wave: TravelingWave,
                  shift: float = 0.0, tail_tol: float = 1e-8) -> dict:
    """int exp(-mu z) A(w(z - shift)) dz with mu = sqrt(2 alpha)(rho - 1).

    The integrand decays like exp(mu z) on the left (A vanishes quadratically
    at lambda*) and like q exp(-mu z) on the right; the window is widened until
    both analytic tail estimates fall below tail_tol times the bulk.
    """
    mu = math.sqrt(2.0 * mech.alpha) * (consts.rho - 1.0)

    def integrand(z):
        return math.exp(-mu * z) * float(big_a(consts, mech, wave(z - shift)))

    half = 10.0 / mu
    while True:
        lo, hi = shift - half, shift + half
        bulk = 0.0
        edges = np.linspace(lo, hi, 9)
        # absolute floor well below the target accuracy, so roundoff in A near lambda* is tolerated
        floor = 1e-13 * max(abs(integrand(z)) for z in np.linspace(lo, hi, 65)) * (hi - lo)
        for a, b in zip(edges[:-1], edges[1:]):
            bulk += quad(integrand, a, b, epsabs=floor, epsrel=1e-11, limit=200)[0]
        left_tail = integrand(lo) / mu
        right_tail = integrand(hi) / mu
        if max(left_tail, right_tail) < tail_tol * bulk or half > 400.0 / mu:
            break
        half *= 1.5
    return {"integral": bulk + left_tail + right_tail, "bulk": bulk, "left_tail": left_tail,
            "right_tail": right_tail, "window": (lo, hi), "decay_rate": mu}


def critical_s_integral(alpha: float, rho: float) -> dict:
    """int_0^inf s^p exp(-alpha rho^2 s^2) ds, p = 3(rho-1)/2, by quadrature and closed form."""
    p = 1.5 * (rho - 1.0)
    c = alpha * rho * rho
    numeric = quad(lambda s: s**p * math.exp(-c * s * s), 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    closed = gamma((p + 1.0) / 2.0) / (2.0 * c ** ((p + 1.0) / 2.0))
    return {"quadrature": numeric, "closed_form": float(closed), "exponent": p, "scale": c}


def deep_s_integral(
    mech: BranchingMechanism,
    consts: DerivedConstants,
    delta: float,
    g_fields: list[SpaceTimeField],
    tail_tol: float = 1e-3,
) -> dict:
    """int_0^inf exp((q - alpha delta^2) s) ds int exp(sqrt(2 alpha) delta z) G(s, z) dz.

    Uses every stored snapshot of the given G fields (finer fields win where
    they overlap).  The part below the first snapshot is reported as an error
    estimate, as is the exponential tail fitted beyond the last one.
    """
    growth = consts.q - mech.alpha * delta * delta
    c = math.sqrt(2.0 * mech.alpha) * delta
    rows = {}
    for fld in sorted(g_fields, key=lambda f: -f.grid.dt):
        for i, s in enumerate(fld.times):
            xs = fld.nodes(i)
            zint = trapezoid(np.exp(c * xs) * fld.values[i], xs)
            rows[round(float(s), 12)] = zint
    s = np.array(sorted(rows))
    inner = np.array([rows[k] for k in s])
    weighted = np.exp(growth * s) * inner
    # stop where |integrand| stops decaying (round-off floor amplified by e^{cz})
    mag = np.abs(weighted)
    late = np.nonzero((s >= 1.0) & (np.arange(len(s)) > 0))[0]
    cut = len(s)
    for i in late:
        if mag[i] >= mag[i - 1] or np.sign(weighted[i]) != np.sign(weighted[i - 1]):
            cut = i
            break
    s, weighted = s[:cut], weighted[:cut]
    body = float(trapezoid(weighted, s))
    head = abs(weighted[0]) * s[0]
    # tail: fit log|weighted| over the last fifth of [1, s_cut]
    sel = s >= s[-1] - 0.2 * (s[-1] - 1.0)
    decay = math.nan
    tail = math.inf
    if np.count_nonzero(sel) >= 3 and np.all(weighted[sel] != 0):
        slope = np.polyfit(s[sel], np.log(np.abs(weighted[sel])), 1)[0]
        decay = -float(slope)
        if decay > 0:
            tail = abs(weighted[-1]) / decay
    converged = tail <= tail_tol * max(abs(body), 1e-300)
    return {"integral": body, "head_estimate": head, "tail_estimate": tail, "tail_decay": decay,
            "converged": bool(converged), "s_min": float(s[0]), "s_max": float(s[-1]),
            "s": s, "weighted": weighted}


def deep_fields(mech: BranchingMechanism, consts: DerivedConstants, t_max: float = 25.0,
                left: float = 55.0) -> dict:
    """v and G for the deep regime: a coarse long window and a fine one covering s <= 1.

    G is taken from the coupled (u*, v) solve; building it from u - u* would
    leave absolute round-off that the z-weight exp(sqrt(2 alpha) |delta| |z|)
    amplifies.
    """
    from .fkpp.grid import GridSpec, TestFunction
    from .fkpp.solver import g_fields, solve_coupled

    coarse_dx, fine_dx = 0.05, 0.01
    x_min = -math.ceil(left / coarse_dx) * coarse_dx
    t_max = math.ceil(t_max / 0.05 - 1e-9) * 0.05
    layouts = ((GridSpec(x_min, 15.0, coarse_dx, 0.01, t_max), 0.05, 1.0),
               (GridSpec(-10.0, 10.0, fine_dx, 0.001, 1.0), 0.001, 0.001))
    out: dict = {"g_fields": []}
    for grid, step, start in layouts:
        times = np.round(np.arange(start, grid.t_max + 1e-9, step), 6)
        us, v = solve_coupled(mech, consts, TestFunction.zero(), grid, snapshot_times=times)
        _, big_g = g_fields(us, us, v, mech, consts)
        out["g_fields"].append(big_g)
        out.setdefault("v", v)
    return out


def asymptotic_law(
    consts: DerivedConstants,
    classification: RegimeClassification,
    wave: Optional[TravelingWave],
    g_field: Optional[Union[SpaceTimeField, list]],
    mech: BranchingMechanism,
    wave_shift: float = 0.0,
) -> AsymptoticLaw:
    """Rate, polynomial exponent and prefactor of the regime.

    ``wave_shift`` places the wave as w(z - wave_shift), i.e. the translate
    that the PDE profile u(t, m_t + z) converges to.
    """
    cls = classification
    alpha, q, rho = mech.alpha, consts.q, consts.rho
    rate, poly = exponents(alpha, q, rho, cls)
    sf = consts.survival_factor
    law = AsymptoticLaw(cls.regime, rate, poly, None, {"survival_factor": sf})
    if cls.regime in ("shallow", "critical"):
        if wave is None:
            law.diagnostics["skipped"] = "traveling wave required"
            return law
        zint = wave_integral(mech, consts, wave, wave_shift)
        law.prefactor_breakdown["z_integral"] = zint["integral"]
        law.diagnostics["z_tails"] = (zint["left_tail"], zint["right_tail"])
        law.diagnostics["z_window"] = zint["window"]
        if cls.regime == "shallow":
            geom = cls.a_delta**poly / (math.sqrt(2.0 * alpha) * rho)
            law.prefactor_breakdown["geometric_factor"] = geom
        else:
            sint = critical_s_integral(alpha, rho)
            geom = sint["quadrature"] / math.sqrt(2.0 * math.pi)
            law.prefactor_breakdown["s_integral"] = sint["quadrature"]
            law.prefactor_breakdown["geometric_factor"] = geom
        law.prefactor = sf * geom * zint["integral"]
        return law
    if g_field is None:
        law.diagnostics["skipped"] = "G field required"
        return law
    fields = g_field if isinstance(g_field, list) else [g_field]
    sint = deep_s_integral(mech, consts, cls.delta, fields)
    direct = 1.0 / (2.0 * math.sqrt(math.pi * alpha) * abs(cls.delta))
    law.prefactor_breakdown["direct_term"] = direct
    law.prefactor_breakdown["s_integral"] = sint["integral"]
    law.diagnostics.update({k: sint[k] for k in ("head_estimate", "tail_estimate", "tail_decay", "s_min", "s_max")})
    if not sint["converged"]:
        law.diagnostics["skipped"] = "s-integral tail above tolerance at s_max"
        return law
    law.prefactor = sf * (direct + sint["integral"] / math.sqrt(2.0 * math.pi))
    return law


# ---------------------------------------------------------------- trends

@dataclass
class TrendResult:
    t: np.ndarray
    y: np.ndarray
    differences: np.ndarray
    decreasing: bool
    target: Optional[float] = None
    notices: list = field(default_factory=list)

    @property
    def final_gap(self) -> Optional[float]:
        if self.target is None or not len(self.y):
            return None
        return abs(float(self.y[-1]) - self.target)


def scaled_trend(
    consts: DerivedConstants,
    classification: RegimeClassification,
    v_field: SpaceTimeField,
    t_list,
    mech: BranchingMechanism,
    law: Optional[AsymptoticLaw] = None,
) -> TrendResult:
    """y(t) = log v(t, sqrt(2 alpha) delta t) + rate t - poly log t."""
    rate, poly = exponents(mech.alpha, consts.q, consts.rho, classification)
    c = math.sqrt(2.0 * mech.alpha) * classification.delta
    ts, ys, notices = [], [], []
    for t in t_list:
        v = float(v_field.at(t, c * t))
        if not v > V_FLOOR:
            notices.append(f"v({t:g}) below {V_FLOOR:g}; t_list truncated")
            break
        ts.append(float(t))
        ys.append(math.log(v) + rate * t - poly * math.log(t))
    y = np.array(ys)
    diffs = np.abs(np.diff(y))
    decreasing = bool(len(diffs) >= 1 and np.all(np.diff(diffs) < 0))
    target = law.log_scaled_target if law is not None else None
    return TrendResult(np.array(ts), y, diffs, decreasing, target, notices)


def g_hat_limit_error(
    g_hat: SpaceTimeField,
    u_field: SpaceTimeField,
    wave: TravelingWave,
    consts: DerivedConstants,
    mech: BranchingMechanism,
    t: float,
    z_range=(-3.0, 5.0),
) -> dict:
    """sup_z |Ghat(t, m_t + z) - A(w(z - s))| with s the matched translate of u."""
    from .fkpp.wave import extract_wave_limit

    est = extract_wave_limit(u_field, consts, mech.alpha, t)
    sel = (est.z >= z_range[0]) & (est.z <= z_range[1])
    z = est.z[sel]
    gh = np.asarray(g_hat.at(t, est.centre + z))
    target = big_a(consts, mech, wave(z - est.shift))
    unmatched = big_a(consts, mech, wave(z))
    return {"t": t, "sup_error": float(np.max(np.abs(gh - target))), "shift": est.shift,
            "sup_error_unmatched": float(np.max(np.abs(gh - unmatched)))}


# ---------------------------------------------------------------- limit measure

def limit_measure_ratio(
    consts: DerivedConstants,
    wave_f: Union[WaveEstimate, TravelingWave],
    wave_0: Union[WaveEstimate, TravelingWave],
    mech: BranchingMechanism,
    regime: str,
    wave: Optional[TravelingWave] = None,
) -> dict:
    """Laplace-functional ratio int e^{-mu z} A(w_f) / int e^{-mu z} A(w).

    Extracted profiles are placed as translates of the reference wave through
    their lambda*/2 crossings; both must come from the same centring.
    """
    if regime not in ("shallow", "critical"):
        raise DeviationError("the wave-integral ratio applies to the shallow and critical regimes")
    wave = wave or traveling_wave(mech, consts)
    shifts = []
    for prof in (wave_f, wave_0):
        if isinstance(prof, WaveEstimate):
            shifts.append(prof.shift)
        else:
            shifts.append(0.0)
    if isinstance(wave_f, WaveEstimate) and isinstance(wave_0, WaveEstimate):
        if abs(wave_f.centre - wave_0.centre) > 1e-12:
            raise DeviationError("profiles were extracted with different centrings")
    num = wave_integral(mech, consts, wave, shifts[0])
    den = wave_integral(mech, consts, wave, shifts[1])
    mu = num["decay_rate"]
    ratio = num["integral"] / den["integral"] if shifts[0] != shifts[1] else 1.0
    return {"ratio": ratio, "shift_f": shifts[0], "shift_0": shifts[1],
            "translate_form": math.exp(-mu * (shifts[0] - shifts[1]))}


# ---------------------------------------------------------------- inequalities

def quadratic_margin(alpha, q, rho, x, c):
    """LHS - RHS of q(1-x) + alpha(x-c)^2/(1-x) >= 2 alpha(rho-1)(1-c) + alpha rho^2 (1-(1-c)/rho-x)^2."""
    lhs = q * (1 - x) + alpha * (x - c) ** 2 / (1 - x)
    rhs = 2 * alpha * (rho - 1) * (1 - c) + alpha * rho**2 * (1 - (1 - c) / rho - x) ** 2
    return lhs - rhs


def _gauss_tail(gap, base, n_nodes=128):
    """int_0^inf exp(-(gap) s - s^2/2) ds * base, vectorized Gauss-Legendre on [0, S]."""
    gx, gw = np.polynomial.legendre.leggauss(n_nodes)
    span = -gap + np.sqrt(gap * gap + 80.0)
    s = 0.5 * span[:, None] * (gx[None, :] + 1.0)
    vals = np.exp(-gap[:, None] * s - 0.5 * s * s)
    return base * 0.5 * span * (vals @ gw)


def gaussian_min_expectation(b1, b2):
    """E(min(exp(-b1(b2 + B_1)), 1)) by quadrature.

    Splits at B_1 = -b2: the exponential part is int_0^inf e^{-b1 s} phi(s - b2) ds
    and the indicator part is P(B_1 > b2); both reduce to _gauss_tail.
    """
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    phi_b2 = np.exp(-0.5 * b2 * b2) / math.sqrt(2.0 * math.pi)
    expo = _gauss_tail(b1 - b2, phi_b2)
    indicator = _gauss_tail(b2, phi_b2)
    return expo + indicator


def gaussian_min_closed_form(b1, b2):
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    return np.exp(-b1 * b2 + 0.5 * b1 * b1 + log_ndtr(b2 - b1)) + np.exp(log_ndtr(-b2))


def gaussian_min_bound(b1, b2):
    return (1.0 / (b1 - b2) + 1.0 / b2) * np.exp(-0.5 * b2 * b2) / math.sqrt(2.0 * math.pi)


@dataclass
class InequalityReport:
    quadratic_min_margin: float
    quadratic_ok: bool
    quadratic_equality_gap: float
    gaussian_max_excess: float
    gaussian_ok: bool
    gaussian_closed_form_gap: float
    upper_w_constants: dict = field(default_factory=dict)  # t -> c_eps
    upper_w_epsilon: Optional[float] = None
    n_random: int = 0

    @property
    def upper_w_log_spread(self) -> Optional[float]:
        vals = [v for v in self.upper_w_constants.values()]
        if len(vals) < 2:
            return None
        return float(max(np.log(vals)) - min(np.log(vals)))


def upper_w_constant(v_field: SpaceTimeField, mech: BranchingMechanism, consts: DerivedConstants,
                     t: float, eps: float, z_max: float) -> float:
    """sup_{0 <= z <= z_max} v(t, m_t - z) exp((mu - eps) z)."""
    mu = math.sqrt(2.0 * mech.alpha) * (consts.rho - 1.0)
    z = np.linspace(0.0, z_max, 401)
    vals = np.asarray(v_field.at(t, float(centering(mech.alpha, t)) - z))
    return float(np.max(vals * np.exp((mu - eps) * z)))


def inequality_suite(
    consts: DerivedConstants,
    mech: BranchingMechanism,
    n_random: int,
    seed: int,
    v_field: Optional[SpaceTimeField] = None,
    t_values=(),
    z_max: float = 10.0,
) -> InequalityReport:
    rng = np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))
    alpha, q, rho = mech.alpha, consts.q, consts.rho
    x = rng.uniform(0.0, 1.0, n_random)
    x = np.clip(x, 1e-12, 1 - 1e-12)
    c = rng.uniform(-5.0, 2.0, n_random)
    margins = quadratic_margin(alpha, q, rho, x, c)
    # equality at the minimizer x = 1 - (1 - c)/rho, checked in high precision
    worst_eq = 0.0
    with mpmath.workdps(40):
        for cc in np.linspace(1.0 - rho + 0.05, 0.95, 7):
            xm = 1 - (1 - mpmath.mpf(cc)) / mpmath.mpf(rho)
            lhs = q * (1 - xm) + alpha * (xm - cc) ** 2 / (1 - xm)
            rhs = 2 * alpha * (rho - 1) * (1 - cc)
            worst_eq = max(worst_eq, float(abs(lhs - rhs)) / max(1.0, abs(float(rhs))))
    b2 = rng.uniform(0.01, 8.0, n_random)
    b1 = b2 + rng.uniform(0.01, 10.0, n_random)
    lhs = gaussian_min_expectation(b1, b2)
    excess = lhs - gaussian_min_bound(b1, b2)
    closed_gap = float(np.max(np.abs(lhs - gaussian_min_closed_form(b1, b2))))
    report = InequalityReport(
        quadratic_min_margin=float(np.min(margins)),
        quadratic_ok=bool(np.min(margins) >= -1e-12),
        quadratic_equality_gap=worst_eq,
        gaussian_max_excess=float(np.max(excess)),
        gaussian_ok=bool(np.max(excess) <= 1e-10),
        gaussian_closed_form_gap=closed_gap,
        n_random=n_random,
    )
    if v_field is not None and t_values:
        eps = 0.1 * math.sqrt(2.0 * alpha) * (rho - 1.0)
        report.upper_w_epsilon = eps
        for t in t_values:
            report.upper_w_constants[float(t)] = upper_w_constant(v_field, mech, consts, t, eps, z_max)
    return report
