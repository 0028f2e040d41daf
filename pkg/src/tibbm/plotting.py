"""Figures for the CLI report path.  Everything renders off-screen to PNG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.5, 3.6),
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "lines.linewidth": 1.3,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def airy_modes(x, modes, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for n, y in enumerate(modes, start=1):
            ax.plot(x, y, label=f"n={n}")
        ax.set_xlabel("x")
        ax.set_ylabel(r"$\psi_n(x)$")
        ax.legend(ncol=2)
        return _save(fig, path)


def barrier_curves(t, gamma, zeta, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, gamma, label=r"$\gamma_T$")
        if zeta is not None:
            ax.plot(t, zeta, "--", label=r"$\zeta_T$")
        ax.set_xlabel("t")
        ax.set_ylabel("position")
        ax.legend()
        return _save(fig, path)


def field_snapshot(x, values, path: Path, oracle=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, values, label="spectral")
        if oracle is not None:
            ax.plot(x, oracle, ":", label="finite difference")
            ax.legend()
        ax.set_xlabel("x")
        ax.set_ylabel("W(t, x)")
        return _save(fig, path)


def fkpp_fronts(T, fronts, predicted, path: Path, fitted=None) -> Path:
    T = np.asarray(T, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogx(T, np.asarray(fronts) - np.asarray(predicted), "o-", label="front - m'(T)")
        if fitted is not None:
            ax.semilogx(T, np.asarray(fitted) - np.asarray(predicted), "s--", label="fit - m'(T)")
        ax.set_xlabel("T")
        ax.set_ylabel("offset")
        ax.legend()
        return _save(fig, path)


def tail_plot(K, p, lo, hi, reference, path: Path, label: str) -> Path:
    K = np.asarray(K, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        p = np.asarray(p)
        err = np.vstack([p - np.asarray(lo), np.asarray(hi) - p])
        ax.errorbar(K, p, yerr=err, fmt="o", capsize=3, label=label)
        ax.plot(K, reference, "--", label="reference slope")
        ax.set_yscale("log")
        ax.set_xlabel("K")
        ax.set_ylabel("probability")
        ax.legend()
        return _save(fig, path)


def gibbs_histogram(centers, density, rho, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        width = centers[1] - centers[0] if len(centers) > 1 else 0.1
        ax.bar(centers, density, width=width, alpha=0.5, label="pooled measure")
        ax.plot(centers, rho, "k-", label=r"$\rho$")
        ax.set_xlabel(r"$X/\sqrt{t}$")
        ax.set_ylabel("density")
        ax.legend()
        return _save(fig, path)
