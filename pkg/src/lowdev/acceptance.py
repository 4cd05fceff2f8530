"""Acceptance suite: sixteen numbered checks on the quadratic mechanism alpha = beta = 1.

Expensive PDE solves are shared through an AcceptanceContext and built on
first use; a criterion whose prerequisite cannot be built is reported as
skipped with the reason.  Report bodies carry no timings so that reruns with
the same seed are byte-identical; runtimes are returned separately.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .deviation import (
    RegimeClassification,
    asymptotic_law,
    classify,
    critical_s_integral,
    deep_fields,
    exponents,
    g_hat_limit_error,
    inequality_suite,
    limit_measure_ratio,
    scaled_trend,
)
from .extinction import solve_k
from .fkpp.feynman_kac import feynman_kac_check, midpoint_times
from .fkpp.grid import GridSpec, TestFunction, default_grid
from .fkpp.solver import compute_uv_triple, g_fields, solve_bbm_cdf, solve_cauchy, solve_coupled
from .fkpp.wave import extract_wave_limit, left_decay_rate, traveling_wave
from .mechanism import BranchingMechanism, big_a, offspring_distribution, solve_lambda_star
from .sbm_particle import ParticleConfig, estimate_extinction, estimate_sup_cdf, finite_mass_cdf
from .skeleton import SkeletonConfig, conditional_tau_sample, estimate_max_cdf, population_tail

FRONT_TIMES = (10.0, 15.0, 20.0, 30.0, 40.0)
FK_PROBES = ((0.5, 0.0), (0.5, 1.0), (1.0, 0.5), (1.0, 2.0), (2.0, 1.0), (2.0, 3.0))
FK_STEP = 0.02
UPPER_W_SPREAD_LIMIT = math.log(2.0)
DEEP_MEDIAN_DRIFT = 1.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: Optional[bool]  # None when skipped
    measured: dict = field(default_factory=dict)
    detail: str = ""
    runtime: float = 0.0
    skipped_reason: Optional[str] = None

    @property
    def status(self) -> str:
        if self.passed is None:
            return "SKIP"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        text = f"criterion {self.number:2d} {self.status} {self.name}"
        if self.skipped_reason:
            return f"{text}: skipped ({self.skipped_reason})"
        return f"{text}: {self.detail}" if self.detail else text


class PrerequisiteError(RuntimeError):
    pass


class AcceptanceContext:
    """Shared inputs for the criteria, each built once on first request."""

    def __init__(self, seed: int = 20240601, workers: int = 1):
        self.mech = BranchingMechanism(1.0, 1.0)
        self.consts = solve_lambda_star(self.mech)
        self.seed = int(seed)
        self.workers = int(workers)
        self._cache: dict = {}
        self._failed: dict = {}
        self.plot_data: dict = {}

    def get(self, name: str):
        if name in self._failed:
            raise PrerequisiteError(f"{name} unavailable: {self._failed[name]}")
        if name not in self._cache:
            try:
                self._cache[name] = getattr(self, f"_build_{name.replace('-', '_')}")()
            except Exception as exc:  # recorded so dependents can be skipped
                self._failed[name] = f"{type(exc).__name__}: {exc}"
                raise PrerequisiteError(f"{name} unavailable: {self._failed[name]}") from exc
        return self._cache[name]

    def sub_seed(self, offset: int) -> int:
        return (self.seed + offset) & ((1 << 64) - 1)

    def _build_wave(self):
        return traveling_wave(self.mech, self.consts)

    def _build_bounds(self):
        grid = default_grid(self.mech.alpha, 10.0)
        times = np.round(np.arange(0.1, 10.0 + 1e-9, 0.1), 10)
        u, us, v = compute_uv_triple(self.mech, self.consts, TestFunction.zero(), grid, snapshot_times=times)
        g_hat, _ = g_fields(u, us, v, self.mech, self.consts)
        return u, us, v, g_hat

    def _build_fk(self):
        grid = default_grid(self.mech.alpha, 2.0, left=10.0, right=10.0)
        times = {t for t, _ in FK_PROBES}
        for t in {t for t, _ in FK_PROBES}:
            times |= set(np.round(midpoint_times(t, int(round(t / FK_STEP))), 10))
        u, us, v = compute_uv_triple(self.mech, self.consts, TestFunction.zero(), grid,
                                     snapshot_times=sorted(times))
        g_hat, _ = g_fields(u, us, v, self.mech, self.consts)
        return us, v, g_hat

    def _build_front(self):
        """u*, v on a fixed window wide enough for the front up to t = 40; u follows exactly."""
        grid = GridSpec(-20.0, 75.0, 0.05, 0.01, 40.0)
        us, v = solve_coupled(self.mech, self.consts, TestFunction.zero(), grid, snapshot_times=FRONT_TIMES)
        ls = self.consts.lambda_star
        u = us.with_values(ls + us.values - ls * v.values, "u")
        g_hat, _ = g_fields(u, us, v, self.mech, self.consts)
        return u, us, v, g_hat

    def _build_deep(self):
        return deep_fields(self.mech, self.consts, 25.0)

    def _build_skeleton(self):
        law = offspring_distribution(self.mech, self.consts, 5)
        return SkeletonConfig(self.consts, law, self.mech.alpha, 2.0)


# ---------------------------------------------------------------- criteria

def _c1(ctx: AcceptanceContext) -> CriterionResult:
    c = ctx.consts
    law = offspring_distribution(ctx.mech, c, 10)
    expected = {"lambda_star": 1.0, "q": 1.0, "rho": math.sqrt(2.0), "p2": 1.0,
                "survival_factor": 1.0 / (math.e - 1.0)}
    got = {"lambda_star": c.lambda_star, "q": c.q, "rho": c.rho, "p2": float(law.probabilities[0]),
           "survival_factor": c.survival_factor}
    err = max(abs(got[k] - expected[k]) for k in expected)
    return CriterionResult(1, "derived constants", err < 1e-10, dict(got, max_abs_error=err),
                           f"max abs error {err:.3e}")


def _c2(ctx: AcceptanceContext) -> CriterionResult:
    lam = np.linspace(0.0, 2.0, 4001)
    err = float(np.max(np.abs(big_a(ctx.consts, ctx.mech, lam) - (1.0 - lam) ** 2)))
    return CriterionResult(2, "A-function closed form", err < 1e-12, {"max_abs_error": err},
                           f"max |A - (1-lam)^2| {err:.3e}")


def _c3(ctx: AcceptanceContext) -> CriterionResult:
    rng = np.random.Generator(np.random.Philox(key=ctx.sub_seed(3)))
    n = 1000
    alpha = rng.uniform(0.5, 4.0, n)
    q = rng.uniform(0.1, 8.0, n)
    delta = rng.uniform(-3.0, 1.0, n)
    worst_cont, worst_id = 0.0, 0.0
    for a, qq, d in zip(alpha, q, delta):
        rho = math.sqrt(1.0 + qq / a)
        boundary = 1.0 - rho
        shallow_at_boundary = exponents(a, qq, rho, RegimeClassification(boundary, "shallow", rho))[0]
        critical = exponents(a, qq, rho, RegimeClassification(boundary, "critical", rho))[0]
        worst_cont = max(worst_cont, abs(critical - shallow_at_boundary))
        deep = exponents(a, qq, rho, RegimeClassification(d, "deep", rho))[0]
        shallow = exponents(a, qq, rho, RegimeClassification(d, "shallow", rho))[0]
        worst_id = max(worst_id, abs(deep - shallow - a * (rho - 1.0 + d) ** 2))
    ok = worst_cont < 1e-12 and worst_id < 1e-12
    return CriterionResult(3, "rate continuity and deep-shallow identity", ok,
                           {"continuity_gap": worst_cont, "identity_gap": worst_id, "n_draws": n},
                           f"continuity {worst_cont:.2e}, identity {worst_id:.2e}")


def _c4(ctx: AcceptanceContext) -> CriterionResult:
    curve = solve_k(ctx.mech, ctx.consts, 0.1, 10.0)
    exact = 1.0 / np.expm1(curve.t_nodes)
    rel = float(np.max(np.abs(curve.k_values / exact - 1.0)))
    monotone = bool(np.all(np.diff(curve.scaled) <= 0.0))
    ctx.plot_data["extinction"] = (curve.t_nodes, curve.k_values, exact)
    return CriterionResult(4, "extinction rate vs closed form", rel < 1e-6 and monotone,
                           {"max_rel_error": rel, "scaled_nonincreasing": monotone},
                           f"max rel error {rel:.3e}, e^(qt)k nonincreasing {monotone}")


def _c5(ctx: AcceptanceContext) -> CriterionResult:
    u, us, v, g_hat = ctx.get("bounds")
    k = solve_k(ctx.mech, ctx.consts, 0.1, 10.0)
    q = ctx.consts.q
    m = {"v_min": math.inf, "v_max": -math.inf, "v_minus_gauss": -math.inf, "u_minus_ustar_min": math.inf,
         "ustar_minus_k": -math.inf, "ghat_minus_qv2": -math.inf}
    for i, t in enumerate(u.times):
        x = u.nodes(i)
        m["v_min"] = min(m["v_min"], float(v.values[i].min()))
        m["v_max"] = max(m["v_max"], float(v.values[i].max()))
        m["v_minus_gauss"] = max(m["v_minus_gauss"], float(np.max(v.values[i] - ndtr(x / math.sqrt(t)))))
        m["u_minus_ustar_min"] = min(m["u_minus_ustar_min"], float(np.min(u.values[i] - us.values[i])))
        m["ustar_minus_k"] = max(m["ustar_minus_k"], float(np.max(us.values[i]) - float(k(t))))
        m["ghat_minus_qv2"] = max(m["ghat_minus_qv2"], float(np.max(g_hat.values[i] - q * v.values[i] ** 2)))
    ok = (m["v_min"] >= 0.0 and m["v_max"] <= 1.0 and m["v_minus_gauss"] <= 1e-6
          and m["u_minus_ustar_min"] >= 0.0 and m["ustar_minus_k"] <= 1e-8 and m["ghat_minus_qv2"] <= 1e-10)
    detail = (f"v in [{m['v_min']:.2g}, {m['v_max']:.2g}], v-Phi {m['v_minus_gauss']:.2e}, "
              f"u*-k {m['ustar_minus_k']:.2e}, Ghat-qv^2 {m['ghat_minus_qv2']:.2e}")
    return CriterionResult(5, "PDE bounds suite", ok, m, detail)


def _c6(ctx: AcceptanceContext) -> CriterionResult:
    us, v, g_hat = ctx.get("fk")
    rows, ok = [], True
    for j, (t, x) in enumerate(FK_PROBES):
        est = feynman_kac_check(ctx.mech, ctx.consts, us, g_hat, t, x, 100_000, ctx.sub_seed(60 + j),
                                n_steps=int(round(t / FK_STEP)), workers=ctx.workers)
        pde = float(v.at(t, x))
        good = est.within(pde, 3.0, 2e-3)
        ok &= good
        rows.append((t, x, est.value, est.std_error, pde))
    ctx.plot_data["feynman_kac"] = rows
    worst = max(abs(r[2] - r[4]) / r[3] for r in rows)
    measured = {f"t{t:g}_x{x:g}": {"mc": mc, "se": se, "pde": p} for t, x, mc, se, p in rows}
    return CriterionResult(6, "Feynman-Kac cross-check", ok, dict(measured, worst_z=worst),
                           f"worst |MC - PDE| / SE {worst:.2f} over {len(rows)} probes")


def _c7(ctx: AcceptanceContext) -> CriterionResult:
    wave = ctx.get("wave")
    u = ctx.get("front")[0]
    interior = wave.max_residual
    target_rate = left_decay_rate(ctx.mech, ctx.consts)
    rate_err = abs(wave.measured_left_rate / target_rate - 1.0)
    est = extract_wave_limit(u, ctx.consts, ctx.mech.alpha, 30.0)
    matched = est.matched_error(wave, -3.0, 5.0)
    z = est.z[(est.z >= -6) & (est.z <= 8)]
    ctx.plot_data["wave"] = (z, wave(z - est.shift), np.interp(z, est.z, est.values), est.shift)
    ok = interior < 1e-6 and rate_err < 0.02 and matched < 0.05
    return CriterionResult(7, "traveling wave", ok,
                           {"residual": interior, "left_rate_rel_error": rate_err, "matched_error_t30": matched,
                            "shift_t30": est.shift},
                           f"residual {interior:.2e}, left-rate error {rate_err:.2e}, t=30 matched error {matched:.4f}")


def _c8(ctx: AcceptanceContext) -> CriterionResult:
    wave = ctx.get("wave")
    u, _, _, g_hat = ctx.get("front")
    e15 = g_hat_limit_error(g_hat, u, wave, ctx.consts, ctx.mech, 15.0)
    e30 = g_hat_limit_error(g_hat, u, wave, ctx.consts, ctx.mech, 30.0)
    ok = e30["sup_error"] < 0.05 and e30["sup_error"] < e15["sup_error"]
    return CriterionResult(8, "Ghat limit", ok,
                           {"sup_error_t15": e15["sup_error"], "sup_error_t30": e30["sup_error"],
                            "unmatched_t30": e30["sup_error_unmatched"]},
                           f"t=15 {e15['sup_error']:.4f}, t=30 {e30['sup_error']:.4f}")


def _c9(ctx: AcceptanceContext) -> CriterionResult:
    cfg = ctx.get("skeleton")
    grid = default_grid(ctx.mech.alpha, 2.0, left=10.0, right=10.0)
    cdf = solve_bbm_cdf(ctx.mech, ctx.consts, grid, snapshot_times=[2.0])
    ok = True
    measured = {}
    worst = 0.0
    for j, x in enumerate((0.0, 1.0, 2.0, 3.0)):
        est = estimate_max_cdf(cfg, x, 100_000, ctx.sub_seed(90 + j), workers=ctx.workers)
        ref = float(cdf.at(2.0, x))
        env = est.flags["envelope"]
        good = est.within(ref) and est.value <= env + 3.0 * est.std_error and est.flags["capped_runs"] == 0
        ok &= good
        worst = max(worst, abs(est.value - ref) / est.std_error)
        measured[f"x{x:g}"] = {"mc": est.value, "se": est.std_error, "pde": ref, "envelope": env}
    for t in (1.0, 2.0):
        est, bound = population_tail(cfg.with_horizon(t), 3, 100_000, ctx.sub_seed(95 + int(t)), ctx.workers)
        ok &= est.value - 3.0 * est.std_error <= bound
        measured[f"population_le3_t{t:g}"] = {"mc": est.value, "se": est.std_error, "bound": bound}
    return CriterionResult(9, "skeleton Monte Carlo vs BBM oracle", ok, dict(measured, worst_z=worst),
                           f"worst |MC - PDE| / SE {worst:.2f}; population and envelope bounds held {ok}")


def _c10(ctx: AcceptanceContext) -> CriterionResult:
    r = critical_s_integral(ctx.mech.alpha, ctx.consts.rho)
    rel = abs(r["quadrature"] / r["closed_form"] - 1.0)
    return CriterionResult(10, "critical s-integral", rel < 1e-8,
                           {"quadrature": r["quadrature"], "closed_form": r["closed_form"], "rel_error": rel},
                           f"rel error {rel:.2e}")


def _c11(ctx: AcceptanceContext) -> CriterionResult:
    wave = ctx.get("wave")
    u, _, v, _ = ctx.get("front")
    cls = classify(ctx.consts, 0.7)
    shift = extract_wave_limit(u, ctx.consts, ctx.mech.alpha, 40.0).shift
    law = asymptotic_law(ctx.consts, cls, wave, None, ctx.mech, wave_shift=shift)
    trend = scaled_trend(ctx.consts, cls, v, (10.0, 20.0, 30.0, 40.0), ctx.mech, law)
    gap = trend.final_gap
    ctx.plot_data["trend_shallow"] = (trend.t, trend.y, trend.target)
    ok = trend.decreasing and gap is not None and gap < 0.25 and len(trend.t) == 4
    return CriterionResult(11, "shallow-regime trend", ok,
                           {"y": list(map(float, trend.y)), "differences": list(map(float, trend.differences)),
                            "target": trend.target, "final_gap": gap, "prefactor": law.prefactor, "shift": shift},
                           f"differences {np.round(trend.differences, 4).tolist()}, |y(40) - target| {gap:.4f}")


def _c12(ctx: AcceptanceContext) -> CriterionResult:
    deep = ctx.get("deep")
    cls = classify(ctx.consts, -1.0)
    rate, poly = exponents(ctx.mech.alpha, ctx.consts.q, ctx.consts.rho, cls)
    law = asymptotic_law(ctx.consts, cls, None, deep["g_fields"], ctx.mech)
    trend = scaled_trend(ctx.consts, cls, deep["v"], (5.0, 10.0, 15.0), ctx.mech, law)
    ctx.plot_data["trend_deep"] = (trend.t, trend.y, trend.target)
    ok = trend.decreasing and len(trend.t) == 3 and abs(rate - 2.0) < 1e-12 and poly == -0.5
    return CriterionResult(12, "deep-regime trend", ok,
                           {"rate": rate, "poly_exponent": poly, "y": list(map(float, trend.y)),
                            "differences": list(map(float, trend.differences)), "prefactor": law.prefactor,
                            "log_target": law.log_scaled_target},
                           f"rate {rate:g}, differences {np.round(trend.differences, 4).tolist()}")


def _c13(ctx: AcceptanceContext) -> CriterionResult:
    cfg = ctx.get("skeleton")
    samples = {}
    for j, (delta, t) in enumerate(((0.7, 4.0), (0.7, 8.0), (-1.0, 4.0), (-1.0, 6.0))):
        samples[(delta, t)] = conditional_tau_sample(cfg.with_horizon(t), delta, 2000, ctx.sub_seed(130 + j),
                                                     workers=ctx.workers)
    a_delta = classify(ctx.consts, 0.7).a_delta
    gaps = {t: abs(samples[(0.7, t)].mean_ratio - a_delta) for t in (4.0, 8.0)}
    literal = gaps[8.0] < 0.15 and gaps[8.0] < gaps[4.0]
    window = {t: abs(samples[(0.7, t)].mean_ratio - (1.0 - a_delta)) for t in (4.0, 8.0)}
    window_ok = window[8.0] < 0.15 and window[8.0] < window[4.0]
    medians = {t: samples[(-1.0, t)].median_gap for t in (4.0, 6.0)}
    deep_ok = all(m <= 3.0 for m in medians.values()) and abs(medians[6.0] - medians[4.0]) <= DEEP_MEDIAN_DRIFT
    ctx.plot_data["tau"] = samples[(0.7, 8.0)]
    measured = {"a_delta": a_delta, "mean_ratio_t4": samples[(0.7, 4.0)].mean_ratio,
                "mean_ratio_t8": samples[(0.7, 8.0)].mean_ratio, "gap_a_delta_t8": gaps[8.0],
                "gap_window_centre_t4": window[4.0], "gap_window_centre_t8": window[8.0],
                "window_centre_check": window_ok, "deep_median_t4": medians[4.0], "deep_median_t6": medians[6.0],
                "deep_ok": deep_ok}
    detail = (f"mean tau/t {samples[(0.7, 8.0)].mean_ratio:.3f} vs a_delta {a_delta:.3f} (gap {gaps[8.0]:.3f}); "
              f"vs 1-a_delta gap {window[8.0]:.3f}; deep medians {medians[4.0]:.3f}, {medians[6.0]:.3f}")
    return CriterionResult(13, "conditional first-branching time", literal and deep_ok, measured, detail)


def _c14(ctx: AcceptanceContext) -> CriterionResult:
    mech, c = ctx.mech, ctx.consts
    grid = default_grid(mech.alpha, 1.0, left=10.0, right=10.0)
    u = solve_cauchy(mech, c, TestFunction.zero(), "none", grid, snapshot_times=[1.0])
    pde = math.exp(-float(u.at(1.0, 1.0)))
    est = estimate_sup_cdf(ParticleConfig(mech, 200, 1.0, seed=ctx.sub_seed(140)), 1.0, 20_000, ctx.workers)
    ext = estimate_extinction(ParticleConfig(mech, 200, 8.0, seed=ctx.sub_seed(141)), 20_000, ctx.workers)
    biases = {m: abs(float(finite_mass_cdf(mech, c, m, 1.0, [1.0], grid)[0]) - pde) for m in (50, 100, 200)}
    sup_ok = est.within(pde, 3.0, 0.02)
    ext_ok = ext.within(math.exp(-c.lambda_star), 3.0, 0.02)
    bias_ok = biases[200] < biases[100] < biases[50]
    measured = {"mc": est.value, "se": est.std_error, "pde": pde, "extinction": ext.value,
                "extinction_se": ext.std_error, "bias_m50": biases[50], "bias_m100": biases[100],
                "bias_m200": biases[200]}
    detail = (f"|P - PDE| {abs(est.value - pde):.4f} vs {3 * est.std_error + 0.02:.4f}; extinction "
              f"{ext.value:.4f}; bias {biases[50]:.4f} > {biases[100]:.4f} > {biases[200]:.4f}")
    return CriterionResult(14, "particle SBM vs PDE", sup_ok and ext_ok and bias_ok, measured, detail)


def _c15(ctx: AcceptanceContext) -> CriterionResult:
    v = ctx.get("front")[2]
    rep = inequality_suite(ctx.consts, ctx.mech, 100_000, ctx.sub_seed(150), v_field=v, t_values=(10.0, 20.0))
    spread = rep.upper_w_log_spread
    consts_finite = all(math.isfinite(x) and x > 0 for x in rep.upper_w_constants.values())
    ok = rep.quadratic_ok and rep.gaussian_ok and consts_finite and spread is not None and spread <= UPPER_W_SPREAD_LIMIT
    measured = {"quadratic_min_margin": rep.quadratic_min_margin, "gaussian_max_excess": rep.gaussian_max_excess,
                "gaussian_closed_form_gap": rep.gaussian_closed_form_gap, "upper_w_log_spread": spread,
                **{f"upper_w_t{t:g}": val for t, val in rep.upper_w_constants.items()}}
    return CriterionResult(15, "inequality suite", ok, measured,
                           f"min margin {rep.quadratic_min_margin:.2e}, gaussian excess {rep.gaussian_max_excess:.2e}, "
                           f"upper-w log spread {spread:.3f}")


def _c16(ctx: AcceptanceContext) -> CriterionResult:
    wave = ctx.get("wave")
    mech, c = ctx.mech, ctx.consts
    grid = GridSpec(-20.0, 60.0, 0.05, 0.01, 30.0)
    heights = (0.0, 0.25, 0.5, 1.0)
    ests = {}
    for h in heights:
        f = TestFunction.zero() if h == 0 else TestFunction.step(h, -1.0, 0.0)
        u = solve_cauchy(mech, c, f, "none", grid, snapshot_times=[30.0])
        ests[h] = extract_wave_limit(u, c, mech.alpha, 30.0)
    ratios = {h: limit_measure_ratio(c, ests[h], ests[0.0], mech, "shallow", wave)["ratio"] for h in heights}
    vals = [ratios[h] for h in heights[1:]]
    ok = ratios[0.0] == 1.0 and all(a > b for a, b in zip(vals, vals[1:])) and all(0 < r <= 1 for r in vals)
    return CriterionResult(16, "limit-measure ratio", ok, {f"ratio_h{h:g}": r for h, r in ratios.items()},
                           "ratios " + ", ".join(f"{h:g}:{r:.4f}" for h, r in ratios.items()))


@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    run: Callable[[AcceptanceContext], CriterionResult]
    runtime_limit: Optional[float]  # seconds, None when unconstrained


CRITERIA = (
    Criterion(1, "derived constants", _c1, 1.0),
    Criterion(2, "A-function closed form", _c2, None),
    Criterion(3, "rate continuity and deep-shallow identity", _c3, None),
    Criterion(4, "extinction rate vs closed form", _c4, 1.0),
    Criterion(5, "PDE bounds suite", _c5, 60.0),
    Criterion(6, "Feynman-Kac cross-check", _c6, 120.0),
    Criterion(7, "traveling wave", _c7, 60.0),
    Criterion(8, "Ghat limit", _c8, None),
    Criterion(9, "skeleton Monte Carlo vs BBM oracle", _c9, 120.0),
    Criterion(10, "critical s-integral", _c10, None),
    Criterion(11, "shallow-regime trend", _c11, 600.0),
    Criterion(12, "deep-regime trend", _c12, None),
    Criterion(13, "conditional first-branching time", _c13, 600.0),
    Criterion(14, "particle SBM vs PDE", _c14, 600.0),
    Criterion(15, "inequality suite", _c15, 60.0),
    Criterion(16, "limit-measure ratio", _c16, None),
)


def run_criterion(ctx: AcceptanceContext, number: int) -> CriterionResult:
    crit = CRITERIA[number - 1]
    start = time.perf_counter()
    try:
        result = crit.run(ctx)
    except PrerequisiteError as exc:
        return CriterionResult(crit.number, crit.name, None, skipped_reason=str(exc),
                               runtime=time.perf_counter() - start)
    result.runtime = time.perf_counter() - start
    if crit.runtime_limit is not None and result.runtime > crit.runtime_limit:
        result.passed = False
        result.detail += f"; runtime {result.runtime:.1f} s over the {crit.runtime_limit:g} s limit"
    return result


def full_report(ctx: Optional[AcceptanceContext] = None, numbers=None) -> list[CriterionResult]:
    """Run the criteria in order; prerequisites are shared, failures do not stop the run."""
    ctx = ctx or AcceptanceContext()
    numbers = sorted(numbers) if numbers else [c.number for c in CRITERIA]
    return [run_criterion(ctx, n) for n in numbers]


def report_groups(results: list[CriterionResult]) -> dict:
    """Key-value groups for the report body (no timings)."""
    groups = {}
    for r in results:
        items = {"name": r.name, "status": r.status}
        if r.skipped_reason:
            items["skipped_reason"] = r.skipped_reason
        for key, value in _flatten(r.measured).items():
            items[key] = value
        groups[f"criterion_{r.number}"] = items
    passed = sum(r.passed is True for r in results)
    groups["summary"] = {"passed": passed, "failed": sum(r.passed is False for r in results),
                         "skipped": sum(r.passed is None for r in results), "total": len(results)}
    return groups


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        elif isinstance(value, np.generic):
            out[name] = value.item()
        else:
            out[name] = value
    return out
