"""Static figures for reports, rendered with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.figsize": (4.5, 3.2),
    "figure.dpi": 120,
    "lines.linewidth": 1.2,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_wave(path, z, wave_values, profile_values=None, shift: float = 0.0):
    """Traveling wave against an extracted PDE profile (both on z)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(z, wave_values, label="traveling wave")
        if profile_values is not None:
            ax.plot(z, profile_values, "--", label=f"PDE profile (shift {shift:+.3f})")
        ax.set_xlabel("z")
        ax.set_ylabel("w(z)")
        ax.legend()
        return _save(fig, path)


def plot_extinction(path, t, k_values, closed_form=None, bound=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(t, k_values, label="k(t)")
        if closed_form is not None:
            ax.semilogy(t, closed_form, ":", label="closed form")
        if bound is not None:
            ax.semilogy(t, bound, "--", label="upper bound")
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def plot_trend(path, t, y, target=None, label="y(t)"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, y, "o-", label=label)
        if target is not None:
            ax.axhline(target, color="k", ls="--", lw=0.8, label="limit")
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def plot_tau_histogram(path, tau, t, window=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(np.asarray(tau) / t, bins=40, range=(0.0, 1.0), density=True)
        if window is not None:
            for edge in window:
                ax.axvline(edge / t, color="k", ls="--", lw=0.8)
        ax.set_xlabel("first branching time / t")
        return _save(fig, path)


def plot_feynman_kac(path, probes, mc_values, mc_errors, pde_values):
    """Monte Carlo estimates with 3 SE bars against PDE values, one point per probe."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = np.arange(len(probes))
        ax.errorbar(idx, mc_values, yerr=3 * np.asarray(mc_errors), fmt="o", label="Monte Carlo (3 SE)")
        ax.plot(idx, pde_values, "x", label="PDE")
        ax.set_xticks(idx)
        ax.set_xticklabels([f"({t:g},{x:g})" for t, x in probes], rotation=30)
        ax.set_xlabel("(t, x)")
        ax.legend()
        return _save(fig, path)
