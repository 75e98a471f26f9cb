"""
Figures for run artifacts.  Everything renders off-screen (Agg) to PNG files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 5.0

RC = {
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def snapshots(path, times, states, obstacle=None, count: int = 5):
    """A few recorded profiles (d = 1) or the final state as an image (d = 2)."""
    with plt.rc_context(RC):
        states = np.asarray(states)
        fig, ax = plt.subplots()
        if states.ndim == 2:
            N = states.shape[1]
            x = np.arange(N) / N
            picks = np.unique(np.linspace(0, len(times) - 1, min(count, len(times))).astype(int))
            cmap = plt.get_cmap("viridis")
            for k, i in enumerate(picks):
                c = cmap(k / max(1, len(picks) - 1))
                ax.plot(x, states[i], color=c, label=f"t = {times[i]:.3g}")
                if obstacle is not None:
                    ax.plot(x, obstacle[i], color=c, ls=":", lw=0.8)
            ax.set_xlabel("x")
            ax.set_ylabel("u")
            ax.legend(loc="best")
        else:
            im = ax.imshow(states[-1].T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
            fig.colorbar(im, ax=ax, label=f"u(T = {times[-1]:.3g})")
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
            ax.grid(False)
        return _save(fig, path)


def loglog(path, x, series: dict, xlabel: str, ylabel: str, reference_slope: float | None = None):
    """Log-log plot of named series against ``x``, with an optional slope guide."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        x = np.asarray(x, dtype=float)
        for name, y in series.items():
            y = np.asarray(y, dtype=float)
            ok = y > 0
            if np.any(ok):
                ax.loglog(x[ok], y[ok], "o-", label=name)
        if reference_slope is not None and series:
            y0 = np.asarray(next(iter(series.values())), dtype=float)
            if y0[0] > 0:
                ax.loglog(x, y0[0] * (x / x[0]) ** reference_slope, "k--", lw=0.8, label=f"slope {reference_slope:g}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best")
        return _save(fig, path)


def stability(path, times, distance, stderr, initial, bound):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ratio = np.asarray(distance) / initial if initial > 0 else np.zeros_like(distance)
        se = np.asarray(stderr) / initial if initial > 0 else np.zeros_like(stderr)
        ax.plot(times, ratio, label="E|u - v|_1 / E|xi - zeta|_1")
        ax.fill_between(times, ratio - 2 * se, ratio + 2 * se, alpha=0.25)
        ax.axhline(bound, color="k", ls="--", lw=0.8, label=f"bound {bound:.4g}")
        ax.set_xlabel("t")
        ax.set_ylabel("L1 distance ratio")
        ax.legend(loc="best")
        return _save(fig, path)


def histogram(path, values, label: str):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.hist(np.asarray(values, dtype=float), bins=max(5, int(math.sqrt(len(values)))), color="#2b8cbe")
        ax.set_xlabel(label)
        ax.set_ylabel("members")
        return _save(fig, path)


def sweep(path, values, column, axis: str, name: str):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        v = np.asarray(values, dtype=float)
        c = np.asarray(column, dtype=float)
        if np.all(v > 0) and np.all(c > 0):
            ax.loglog(v, c, "o-")
        else:
            ax.plot(v, c, "o-")
        ax.set_xlabel(axis)
        ax.set_ylabel(name)
        return _save(fig, path)


def bars(path, names, values, tolerance=None, ylabel="value"):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        pos = np.arange(len(names))
        ax.bar(pos, values, color="#4eb3d3")
        if tolerance is not None:
            ax.axhline(tolerance, color="k", ls="--", lw=0.8, label="tolerance")
            ax.legend(loc="best")
        ax.set_xticks(pos)
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel(ylabel)
        return _save(fig, path)
