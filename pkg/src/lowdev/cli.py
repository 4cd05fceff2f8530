"""Batch front-end: ``lowdev run config.toml``.

A run reads one TOML file, resolves every default, writes ``manifest.json``
before any work starts, and emits columnar text (``csv``), key-value reports
(``kv``), per-sample dumps (``raw-samples``) and PNG figures (``figures``)
into ``output_dir``.  Exit codes: 0 success, 2 invalid config, 3 numerical
failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, textio
from .fkpp.grid import TestFunction, default_grid
from .mechanism import BranchingMechanism, DiscreteAtoms, Stable, mechanism_problems

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4
TASKS = ("derive", "solve-fkpp", "wave", "extinction", "simulate-skeleton", "simulate-sbm", "rates",
         "prefactor", "trend", "inequality-suite", "full-report")
EMIT_KINDS = ("csv", "kv", "raw-samples", "figures")
TOP_KEYS = ("task", "seed", "output_dir", "emit", "workers", "mechanism", "params")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


# ---------------------------------------------------------------- config schema

@dataclass(frozen=True)
class Param:
    kind: str  # float | int | bool | floats | ints | strs | optional_float
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""


def _positive(x):
    return x > 0


GRID_PARAMS = {
    "dx": Param("float", 0.05, _positive, "> 0"),
    "dt": Param("float", 0.01, _positive, "> 0"),
    "x_left": Param("float", 20.0, _positive, "> 0"),
    "x_right": Param("float", 15.0, _positive, "> 0"),
}

TASK_PARAMS: dict[str, dict[str, Param]] = {
    "derive": {"n_offspring": Param("int", 10, lambda n: n >= 2, ">= 2")},
    "solve-fkpp": {
        "t_max": Param("float", 10.0, _positive, "> 0"),
        **GRID_PARAMS,
        "snapshot_dt": Param("float", 1.0, _positive, "> 0"),
        "fields": Param("strs", ["v"], lambda v: bool(v) and set(v) <= {"u", "u_star", "v", "g_hat"},
                        "non-empty subset of u, u_star, v, g_hat"),
        "f_height": Param("float", 0.0, lambda h: h >= 0, ">= 0"),
        "f_support": Param("floats", [-1.0, 0.0], lambda s: len(s) == 2 and s[0] <= s[1] <= 0,
                           "[a, b] with a <= b <= 0"),
    },
    "wave": {
        "half_width": Param("float", 30.0, _positive, "> 0"),
        "spacing": Param("float", 0.01, _positive, "> 0"),
        "t_probe": Param("float", 30.0, lambda t: t >= 0, ">= 0 (0 skips the PDE comparison)"),
    },
    "extinction": {
        "t_min": Param("float", 0.1, _positive, "> 0"),
        "t_max": Param("float", 10.0, _positive, "> 0"),
        "n_nodes": Param("int", 400, lambda n: n >= 2, ">= 2"),
    },
    "simulate-skeleton": {
        "t_horizon": Param("float", 2.0, _positive, "> 0"),
        "x_values": Param("floats", [0.0, 1.0, 2.0, 3.0], bool, "non-empty"),
        "n_trees": Param("int", 100_000, lambda n: n >= 1000, ">= 1000"),
        "n_max": Param("int", 50, lambda n: n >= 2, ">= 2"),
        "condition_root_endpoint": Param("bool", False),
        "tau_delta": Param("optional_float", None, lambda d: d < 1, "< 1"),
        "tau_accepted": Param("int", 2000, lambda n: n >= 1, ">= 1"),
    },
    "simulate-sbm": {
        "mass_scale": Param("int", 200, lambda n: n >= 1, ">= 1"),
        "t_horizon": Param("float", 1.0, _positive, "> 0"),
        "x": Param("float", 1.0),
        "n_runs": Param("int", 20_000, lambda n: n >= 1000, ">= 1000"),
        "conditional": Param("bool", False),
    },
    "rates": {"deltas": Param("floats", [-1.0, 1.0 - math.sqrt(2.0), 0.5],
                              lambda d: bool(d) and all(x < 1 for x in d), "non-empty, every delta < 1")},
    "prefactor": {
        "delta": Param("float", 0.7, lambda d: d < 1, "< 1"),
        "shift_t": Param("float", 30.0, lambda t: t >= 0, ">= 0 (0 uses the unshifted wave)"),
        "deep_t_max": Param("float", 25.0, lambda t: t >= 2, ">= 2"),
    },
    "trend": {
        "delta": Param("float", 0.7, lambda d: d < 1, "< 1"),
        "t_values": Param("floats", [10.0, 20.0, 30.0, 40.0],
                          lambda ts: len(ts) >= 2 and all(t > 0 for t in ts) and list(ts) == sorted(set(ts)),
                          "at least two increasing positive times"),
        **GRID_PARAMS,
        "with_target": Param("bool", True),
    },
    "inequality-suite": {
        "n_random": Param("int", 100_000, lambda n: n >= 1, ">= 1"),
        "t_values": Param("floats", [10.0, 20.0], lambda ts: all(t > 0 for t in ts), "positive"),
        "z_max": Param("float", 10.0, _positive, "> 0"),
    },
    "full-report": {"criteria": Param("ints", [], lambda cs: all(1 <= c <= 16 for c in cs),
                                      "criterion numbers in 1..16 (empty runs all)")},
}


def _coerce(kind: str, value):
    """Value converted to the schema kind, or raises TypeError."""
    def number(x, integral=False):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise TypeError
        if integral:
            if isinstance(x, float) and not x.is_integer():
                raise TypeError
            return int(x)
        return float(x)

    if kind == "float":
        return number(value)
    if kind == "int":
        return number(value, integral=True)
    if kind == "optional_float":
        return None if value is None else number(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise TypeError
        return value
    if not isinstance(value, list):
        raise TypeError
    if kind == "floats":
        return [number(x) for x in value]
    if kind == "ints":
        return [number(x, integral=True) for x in value]
    if kind == "strs":
        if not all(isinstance(x, str) for x in value):
            raise TypeError
        return list(value)
    raise ValueError(f"unknown parameter kind {kind}")


def _resolve_mechanism(raw, problems: list[str]) -> dict:
    if raw is None:
        raw = {"alpha": 1.0, "beta": 1.0}
    if not isinstance(raw, dict):
        problems.append("mechanism must be a table")
        return {}
    for key in raw:
        if key not in ("alpha", "beta", "levy"):
            problems.append(f"mechanism: unknown key {key!r}")
    out: dict = {}
    for key in ("alpha", "beta"):
        try:
            out[key] = _coerce("float", raw.get(key, 0.0 if key == "beta" else None))
        except TypeError:
            problems.append(f"mechanism.{key} must be a number")
    levy = raw.get("levy", "none")
    if levy == "none" or levy is None:
        out["levy"] = "none"
    elif isinstance(levy, dict) and len(levy) == 1 and "stable" in levy:
        st = levy["stable"]
        if not isinstance(st, dict) or set(st) != {"theta", "scale"}:
            problems.append("mechanism.levy.stable needs exactly theta and scale")
        else:
            try:
                out["levy"] = {"stable": {"theta": _coerce("float", st["theta"]),
                                          "scale": _coerce("float", st["scale"])}}
            except TypeError:
                problems.append("mechanism.levy.stable theta and scale must be numbers")
    elif isinstance(levy, dict) and len(levy) == 1 and "atoms" in levy:
        atoms = levy["atoms"]
        try:
            out["levy"] = {"atoms": [[_coerce("float", y), _coerce("float", w)] for y, w in atoms]}
        except (TypeError, ValueError):
            problems.append("mechanism.levy.atoms must be a list of [mass, weight] pairs")
    else:
        problems.append("mechanism.levy must be \"none\", {stable = {theta, scale}} or {atoms = [[y, w], ...]}")
    if {"alpha", "beta", "levy"} <= set(out):
        try:
            mechanism_from_dict(out)
        except ValueError as exc:
            problems.append(f"mechanism: {exc}")
    return out


def mechanism_from_dict(d: dict) -> BranchingMechanism:
    levy = d.get("levy", "none")
    part = None
    if isinstance(levy, dict) and "stable" in levy:
        part = Stable(levy["stable"]["theta"], levy["stable"]["scale"])
    elif isinstance(levy, dict) and "atoms" in levy:
        part = DiscreteAtoms(levy["atoms"])
    problems = mechanism_problems(d["alpha"], d["beta"], part)
    if problems:
        raise ValueError("; ".join(problems))
    return BranchingMechanism(d["alpha"], d["beta"], part)


def resolve_config(raw: dict) -> dict:
    """Fully resolved config with every default filled in; raises ConfigError listing all problems."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a table"])
    for key in raw:
        if key not in TOP_KEYS:
            problems.append(f"unknown top-level key {key!r}")
    task = raw.get("task")
    if task not in TASKS:
        problems.append(f"task must be one of {', '.join(TASKS)}; got {task!r}")
    resolved: dict = {"task": task}
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append("seed must be an integer in [0, 2^64)")
    resolved["seed"] = seed
    out_dir = raw.get("output_dir", "lowdev_out")
    if not isinstance(out_dir, str) or not out_dir:
        problems.append("output_dir must be a non-empty string")
    resolved["output_dir"] = out_dir
    emit = raw.get("emit", ["csv", "kv"])
    if not isinstance(emit, list) or not all(e in EMIT_KINDS for e in emit):
        problems.append(f"emit must be a list drawn from {', '.join(EMIT_KINDS)}")
        emit = []
    resolved["emit"] = sorted(set(emit), key=EMIT_KINDS.index)
    workers = raw.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        problems.append("workers must be an integer >= 1")
    resolved["workers"] = workers
    resolved["mechanism"] = _resolve_mechanism(raw.get("mechanism"), problems)
    params_raw = raw.get("params", {})
    params: dict = {}
    if not isinstance(params_raw, dict):
        problems.append("params must be a table")
    elif task in TASK_PARAMS:
        schema = TASK_PARAMS[task]
        for key in params_raw:
            if key not in schema:
                problems.append(f"params: unknown key {key!r} for task {task}")
        for key, spec in schema.items():
            value = params_raw.get(key, spec.default)
            try:
                value = _coerce(spec.kind, value)
            except (TypeError, ValueError):
                problems.append(f"params.{key} must be of type {spec.kind}")
                continue
            if value is not None and spec.check is not None and not spec.check(value):
                problems.append(f"params.{key} must be {spec.rule}; got {value!r}")
            params[key] = value
    resolved["params"] = params
    if not problems:
        problems.extend(_cross_checks(resolved))
    if problems:
        raise ConfigError(problems)
    return resolved


def _cross_checks(cfg: dict) -> list[str]:
    """Constraints spanning several fields (grid shapes, mechanism kind)."""
    problems = []
    p, task = cfg["params"], cfg["task"]
    mech = mechanism_from_dict(cfg["mechanism"])
    try:
        if task == "solve-fkpp":
            default_grid(mech.alpha, p["t_max"], p["dx"], p["dt"], p["x_left"], p["x_right"])
        if task == "trend":
            default_grid(mech.alpha, max(p["t_values"]), p["dx"], p["dt"], p["x_left"], p["x_right"])
    except ValueError as exc:
        problems.append(f"grid: {exc}")
    if task == "extinction" and p["t_max"] <= p["t_min"]:
        problems.append("params.t_max must exceed params.t_min")
    if task == "simulate-sbm" and not (mech.is_quadratic and mech.levy_part is None):
        problems.append("simulate-sbm needs a quadratic mechanism (levy = \"none\")")
    if task == "simulate-sbm" and not p["mass_scale"] > mech.alpha / max(mech.beta, 1e-300):
        problems.append("params.mass_scale must exceed alpha/beta")
    return problems


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file {path} not found"])
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"config is not valid TOML: {exc}"])
    return resolve_config(raw)


# ---------------------------------------------------------------- run context

class Run:
    """Output directory, manifest and the emit switches of one run."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["output_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = {
            "lowdev_version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "host": platform.node(),
            "python": platform.python_version(),
            "config": cfg,
            "status": "running",
            "artifacts": [],
        }
        self.write_manifest()

    def write_manifest(self):
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2, sort_keys=False) + "\n")

    def wants(self, kind: str) -> bool:
        return kind in self.cfg["emit"]

    def _record(self, path: Path):
        self.manifest["artifacts"].append(path.name)

    def kv(self, name: str, groups: dict):
        if self.wants("kv"):
            self._record(textio.write_kv(self.out / name, groups))

    def columns(self, name: str, kind: str, columns, rows, header=None, emit: str = "csv"):
        if self.wants(emit):
            self._record(textio.write_columnar(self.out / name, kind, columns, rows, header))

    def field(self, name: str, fld):
        if self.wants("csv"):
            self._record(textio.write_field(self.out / name, fld))

    def figure(self, name: str, draw: Callable[[Path], Any]):
        if self.wants("figures"):
            self._record(Path(draw(self.out / name)))


# ---------------------------------------------------------------- tasks

def _consts(mech):
    from .mechanism import solve_lambda_star

    return solve_lambda_star(mech)


def task_derive(run: Run, mech, p):
    from .mechanism import offspring_distribution, validate_hypotheses

    c = _consts(mech)
    law = offspring_distribution(mech, c, p["n_offspring"])
    hyp = validate_hypotheses(mech)
    groups = {
        "constants": {"lambda_star": c.lambda_star, "q": c.q, "rho": c.rho,
                      "extinction_prob": c.extinction_prob, "survival_factor": c.survival_factor},
        "hypotheses": {"log_moment": hyp.log_moment_ok.value, "power_growth": hyp.power_growth_ok.value, "grey": hyp.grey_ok.value},
        "offspring": {f"p{n}": float(pr) for n, pr in zip(law.support, law.probabilities)},
    }
    groups["offspring"]["truncation_mass"] = law.truncation_mass
    run.kv("derive.txt", groups)
    return EXIT_OK


def task_solve_fkpp(run: Run, mech, p):
    from .fkpp.solver import g_fields, solve_coupled

    c = _consts(mech)
    grid = default_grid(mech.alpha, p["t_max"], p["dx"], p["dt"], p["x_left"], p["x_right"])
    f = TestFunction.zero() if p["f_height"] == 0 else TestFunction.step(p["f_height"], *p["f_support"])
    times = np.round(np.arange(p["snapshot_dt"], grid.t_max + 1e-9, p["snapshot_dt"]), 10)
    us, v = solve_coupled(mech, c, f, grid, snapshot_times=times)
    ls = c.lambda_star
    fields = {"u_star": us, "v": v, "u": us.with_values(ls + us.values - ls * v.values, "u")}
    if "g_hat" in p["fields"]:
        fields["g_hat"] = g_fields(fields["u"], us, v, mech, c)[0]
    summary = {"grid": grid.header(), "snapshots": len(times)}
    for name in p["fields"]:
        run.field(f"field_{name}.txt", fields[name])
        summary[f"{name}_min"] = float(np.min(fields[name].values))
        summary[f"{name}_max"] = float(np.max(fields[name].values))
    run.kv("solve_fkpp.txt", {"solve": summary})
    return EXIT_OK


def task_wave(run: Run, mech, p):
    from .fkpp.solver import solve_cauchy
    from .fkpp.wave import extract_wave_limit, left_decay_rate, traveling_wave
    from .plotting import plot_wave

    c = _consts(mech)
    wave = traveling_wave(mech, c, half_width=p["half_width"], spacing=p["spacing"])
    info = {"speed": wave.speed, "max_residual": wave.max_residual, "decay_rate_left": wave.decay_rate_left,
            "measured_left_rate": wave.measured_left_rate, "expected_left_rate": left_decay_rate(mech, c),
            "decay_rate_right": wave.decay_rate_right, "normalization": wave.normalization}
    run.columns("wave.txt", "traveling_wave", ["z", "w"], zip(wave.x_nodes, wave.w_values))
    est = None
    if p["t_probe"] > 0:
        grid = default_grid(mech.alpha, p["t_probe"], left=10.0, right=15.0)
        u = solve_cauchy(mech, c, TestFunction.zero(), "none", grid, snapshot_times=[grid.t_max])
        est = extract_wave_limit(u, c, mech.alpha, grid.t_max)
        info.update({"t_probe": grid.t_max, "shift": est.shift, "matched_error": est.matched_error(wave)})
        run.columns("wave_profile.txt", "wave_profile", ["z", "u"], zip(est.z, est.values),
                    {"t": repr(grid.t_max), "centre": repr(est.centre)})
    run.kv("wave_report.txt", {"wave": info})
    z = np.linspace(-8.0, 8.0, 401)
    shift = est.shift if est is not None else 0.0
    profile = np.interp(z, est.z, est.values) if est is not None else None
    run.figure("wave.png", lambda path: plot_wave(path, z, wave(z - shift), profile, shift))
    return EXIT_OK


def task_extinction(run: Run, mech, p):
    from .extinction import check_k_bounds, solve_k
    from .mechanism import validate_hypotheses
    from .plotting import plot_extinction

    c = _consts(mech)
    curve = solve_k(mech, c, p["t_min"], p["t_max"], n_nodes=p["n_nodes"])
    hyp = validate_hypotheses(mech)
    info = {"t_min": p["t_min"], "t_max": p["t_max"], "k_t_min": float(curve.k_values[0]),
            "k_t_max": float(curve.k_values[-1]),
            "scaled_nonincreasing": bool(np.all(np.diff(curve.scaled) <= 0))}
    bound = None
    if hyp.power_growth_witness is not None:
        rep = check_k_bounds(curve, hyp.power_growth_witness)
        bound = rep.bound
        info.update({"c2": rep.c2, "vartheta": rep.vartheta, "bound_holds": rep.holds,
                     "comparison_bound_holds": rep.comparison_holds, "bound_min_margin": rep.min_margin})
    cols = ["t", "k", "scaled_k"] + (["bound"] if bound is not None else [])
    rows = zip(curve.t_nodes, curve.k_values, curve.scaled, *([bound] if bound is not None else []))
    run.columns("extinction.txt", "extinction_rate", cols, rows)
    run.kv("extinction_report.txt", {"extinction": info})
    run.figure("extinction.png", lambda path: plot_extinction(path, curve.t_nodes, curve.k_values, bound=bound))
    return EXIT_OK


def task_simulate_skeleton(run: Run, mech, p):
    from .fkpp.solver import solve_bbm_cdf
    from .mechanism import offspring_distribution
    from .plotting import plot_tau_histogram
    from .skeleton import SkeletonConfig, conditional_tau_sample, estimate_max_cdf

    c = _consts(mech)
    law = offspring_distribution(mech, c, p["n_max"])
    cfg = SkeletonConfig(c, law, mech.alpha, p["t_horizon"])
    grid = default_grid(mech.alpha, p["t_horizon"], left=10.0, right=10.0)
    cdf = solve_bbm_cdf(mech, c, grid, snapshot_times=[grid.t_max])
    groups = {}
    rows = []
    for j, x in enumerate(p["x_values"]):
        est = estimate_max_cdf(cfg, x, p["n_trees"], run.cfg["seed"] + j, p["condition_root_endpoint"],
                               run.cfg["workers"])
        ref = float(cdf.at(grid.t_max, x)) if grid.x_min < x < grid.x_max else math.nan
        rows.append((x, est.value, est.std_error, ref, est.flags["envelope"]))
        groups[f"max_cdf_x{x:g}"] = {"estimate": est.value, "std_error": est.std_error, "pde": ref,
                                     "envelope": est.flags["envelope"], "capped_runs": est.flags["capped_runs"]}
    run.columns("skeleton_max_cdf.txt", "skeleton_max_cdf", ["x", "estimate", "std_error", "pde", "envelope"],
                rows, {"t": repr(p["t_horizon"]), "n_trees": p["n_trees"]})
    if p["tau_delta"] is not None:
        sample = conditional_tau_sample(cfg, p["tau_delta"], p["tau_accepted"], run.cfg["seed"],
                                        workers=run.cfg["workers"])
        groups["tau"] = {"delta": sample.delta, "regime": sample.regime, "mean_ratio": sample.mean_ratio,
                         "median_gap": sample.median_gap, "acceptance_rate": sample.acceptance_rate,
                         "event_probability": sample.event_probability, "window_lo": sample.window[0],
                         "window_hi": sample.window[1], "window_fraction": sample.window_fraction,
                         "n_trees": sample.n_trees}
        run.columns("tau_samples.txt", "tau_samples", ["tau"], ((x,) for x in sample.tau), emit="raw-samples")
        run.figure("tau_histogram.png", lambda path: plot_tau_histogram(path, sample.tau, sample.t, sample.window))
    run.kv("skeleton_report.txt", groups)
    return EXIT_OK


def task_simulate_sbm(run: Run, mech, p):
    from .fkpp.solver import solve_cauchy
    from .rng import DEFAULT_BLOCK, frequency, run_blocks
    from .sbm_particle import ParticleConfig, estimate_conditional_cdf, finite_mass_cdf, sample_runs

    c = _consts(mech)
    cfg = ParticleConfig(mech, p["mass_scale"], p["t_horizon"], seed=run.cfg["seed"])
    x = p["x"]

    def sampler(rng, size):
        sup, tips = sample_runs(rng, size, cfg)
        return np.stack([sup, tips.astype(float)])

    blocks = run_blocks(sampler, p["n_runs"], cfg.seed, DEFAULT_BLOCK, run.cfg["workers"])
    est = frequency([(b[0] <= x).astype(float) for b in blocks], cfg.seed)
    grid = default_grid(mech.alpha, p["t_horizon"], left=10.0, right=10.0)
    u = solve_cauchy(mech, c, TestFunction.zero(), "none", grid, snapshot_times=[grid.t_max])
    info = {"estimate": est.value, "std_error": est.std_error, "n_runs": est.n_samples,
            "pde_limit": math.exp(-float(u.at(grid.t_max, x))),
            "finite_mass_exact": float(finite_mass_cdf(mech, c, p["mass_scale"], p["t_horizon"], [x], grid)[0]),
            "extinct_fraction": float(np.mean(np.concatenate([b[1] for b in blocks]) == 0))}
    if p["conditional"]:
        cond = estimate_conditional_cdf(cfg, x, p["n_runs"], run.cfg["workers"])
        info.update({"conditional_estimate": cond.value, "conditional_std_error": cond.std_error})
    run.kv("sbm_report.txt", {"sbm": info})
    sup = np.concatenate([b[0] for b in blocks])
    mass = np.concatenate([b[1] for b in blocks]) / p["mass_scale"]
    run.columns("sbm_samples.txt", "sbm_samples", ["sup", "mass"], zip(sup, mass), emit="raw-samples")
    return EXIT_OK


def task_rates(run: Run, mech, p):
    from .deviation import rates

    c = _consts(mech)
    rows = rates(mech, c, p["deltas"])
    groups = {f"{r['regime']}:{r['delta']!r}": {k: v for k, v in r.items() if v is not None} for r in rows}
    run.kv("rates.txt", groups)
    run.columns("rates_table.txt", "rates", ["delta", "regime", "rate", "poly_exponent"],
                ((r["delta"], r["regime"], r["rate"], r["poly_exponent"]) for r in rows))
    return EXIT_OK


def _law(mech, c, cls, shift_t: float, deep_t_max: float):
    """Asymptotic law of a regime with the wave translate (or deep G fields) it needs."""
    from .deviation import asymptotic_law, deep_fields
    from .fkpp.solver import solve_cauchy
    from .fkpp.wave import extract_wave_limit, traveling_wave

    if cls.regime == "deep":
        return asymptotic_law(c, cls, None, deep_fields(mech, c, deep_t_max)["g_fields"], mech), None
    wave = traveling_wave(mech, c)
    shift = 0.0
    if shift_t > 0:
        grid = default_grid(mech.alpha, shift_t, left=10.0, right=15.0)
        u = solve_cauchy(mech, c, TestFunction.zero(), "none", grid, snapshot_times=[grid.t_max])
        shift = extract_wave_limit(u, c, mech.alpha, grid.t_max).shift
    return asymptotic_law(c, cls, wave, None, mech, wave_shift=shift), shift


def task_prefactor(run: Run, mech, p):
    from .deviation import classify

    c = _consts(mech)
    cls = classify(c, p["delta"])
    law, shift = _law(mech, c, cls, p["shift_t"], p["deep_t_max"])
    info = {"delta": p["delta"], "regime": law.regime, "rate": law.rate, "poly_exponent": law.poly_exponent,
            "prefactor": law.prefactor, "log_scaled_target": law.log_scaled_target}
    if shift is not None:
        info["wave_shift"] = shift
    info.update({f"breakdown.{k}": v for k, v in law.prefactor_breakdown.items()})
    info.update({f"diagnostic.{k}": v for k, v in law.diagnostics.items() if np.isscalar(v) or isinstance(v, str)})
    run.kv("prefactor.txt", {law.regime: info})
    if law.prefactor is None:
        raise RuntimeError(f"prefactor not computed: {law.diagnostics.get('skipped', 'unknown reason')}")
    return EXIT_OK


def task_trend(run: Run, mech, p):
    from .deviation import classify, scaled_trend
    from .fkpp.solver import solve_coupled
    from .plotting import plot_trend

    c = _consts(mech)
    cls = classify(c, p["delta"])
    t_max = max(p["t_values"])
    barrier_left = -math.sqrt(2.0 * mech.alpha) * p["delta"] * t_max + 10.0
    grid = default_grid(mech.alpha, t_max, p["dx"], p["dt"], max(p["x_left"], barrier_left), p["x_right"])
    _, v = solve_coupled(mech, c, TestFunction.zero(), grid, snapshot_times=p["t_values"])
    law = None
    if p["with_target"]:
        law, _ = _law(mech, c, cls, t_max, max(t_max, 25.0))
    tr = scaled_trend(c, cls, v, p["t_values"], mech, law)
    diffs = [math.nan] + list(tr.differences)
    run.columns("trend.txt", "scaled_trend", ["t", "y", "abs_difference"], zip(tr.t, tr.y, diffs),
                {"delta": repr(p["delta"]), "regime": cls.regime})
    info = {"regime": cls.regime, "decreasing_differences": tr.decreasing, "target": tr.target,
            "final_gap": tr.final_gap, "notices": len(tr.notices)}
    run.kv("trend_report.txt", {"trend": info})
    run.figure("trend.png", lambda path: plot_trend(path, tr.t, tr.y, tr.target))
    return EXIT_OK


def task_inequality_suite(run: Run, mech, p):
    from .deviation import inequality_suite
    from .fkpp.solver import solve_coupled

    c = _consts(mech)
    v = None
    if p["t_values"]:
        grid = default_grid(mech.alpha, max(p["t_values"]), left=p["z_max"] + 10.0, right=15.0)
        _, v = solve_coupled(mech, c, TestFunction.zero(), grid, snapshot_times=p["t_values"])
    rep = inequality_suite(c, mech, p["n_random"], run.cfg["seed"], v, p["t_values"], p["z_max"])
    info = {"quadratic_min_margin": rep.quadratic_min_margin, "quadratic_ok": rep.quadratic_ok,
            "quadratic_equality_gap": rep.quadratic_equality_gap, "gaussian_max_excess": rep.gaussian_max_excess,
            "gaussian_ok": rep.gaussian_ok, "gaussian_closed_form_gap": rep.gaussian_closed_form_gap,
            "upper_w_epsilon": rep.upper_w_epsilon, "upper_w_log_spread": rep.upper_w_log_spread}
    info.update({f"upper_w_t{t:g}": val for t, val in rep.upper_w_constants.items()})
    run.kv("inequalities.txt", {"inequalities": info})
    return EXIT_OK if rep.quadratic_ok and rep.gaussian_ok else EXIT_ACCEPTANCE


def task_full_report(run: Run, mech, p):
    from . import plotting
    from .acceptance import AcceptanceContext, full_report, report_groups

    ctx = AcceptanceContext(seed=run.cfg["seed"], workers=run.cfg["workers"])
    results = full_report(ctx, p["criteria"] or None)
    for r in results:
        print(r.line())
    run.kv("report.txt", report_groups(results))
    run.manifest["runtimes"] = {f"criterion_{r.number}": round(r.runtime, 3) for r in results}
    data = ctx.plot_data
    if "wave" in data:
        z, w, prof, shift = data["wave"]
        run.figure("wave.png", lambda path: plotting.plot_wave(path, z, w, prof, shift))
    if "extinction" in data:
        t, k, exact = data["extinction"]
        run.figure("extinction.png", lambda path: plotting.plot_extinction(path, t, k, exact))
    for key in ("trend_shallow", "trend_deep"):
        if key in data:
            t, y, target = data[key]
            run.figure(f"{key}.png", lambda path, t=t, y=y, target=target: plotting.plot_trend(path, t, y, target))
    if "tau" in data:
        s = data["tau"]
        run.figure("tau_histogram.png", lambda path: plotting.plot_tau_histogram(path, s.tau, s.t, s.window))
    if "feynman_kac" in data:
        rows = data["feynman_kac"]
        run.figure("feynman_kac.png", lambda path: plotting.plot_feynman_kac(
            path, [(r[0], r[1]) for r in rows], [r[2] for r in rows], [r[3] for r in rows], [r[4] for r in rows]))
    return EXIT_OK if all(r.passed is not False for r in results) else EXIT_ACCEPTANCE


TASK_RUNNERS = {
    "derive": task_derive,
    "solve-fkpp": task_solve_fkpp,
    "wave": task_wave,
    "extinction": task_extinction,
    "simulate-skeleton": task_simulate_skeleton,
    "simulate-sbm": task_simulate_sbm,
    "rates": task_rates,
    "prefactor": task_prefactor,
    "trend": task_trend,
    "inequality-suite": task_inequality_suite,
    "full-report": task_full_report,
}


def execute(cfg: dict) -> int:
    """Run a resolved config; the manifest is written before work and updated after."""
    run = Run(cfg)
    mech = mechanism_from_dict(cfg["mechanism"])
    try:
        code = TASK_RUNNERS[cfg["task"]](run, mech, cfg["params"])
    except Exception as exc:
        run.manifest["status"] = "failed"
        run.manifest["failure"] = {"error_type": type(exc).__name__, "message": str(exc)}
        run.write_manifest()
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    run.manifest["status"] = "ok" if code == EXIT_OK else "acceptance_failed"
    run.manifest["exit_code"] = code
    run.write_manifest()
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowdev", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lowdev {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a TOML run config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--output-dir", help="override output_dir from the config")
    val_p = sub.add_parser("validate", help="check a config and print its resolved form as JSON")
    val_p.add_argument("config", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "run" and args.output_dir:
            cfg = resolve_config(dict(cfg, output_dir=args.output_dir))
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.command == "validate":
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
