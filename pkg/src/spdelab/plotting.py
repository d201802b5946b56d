"""Static figures written next to the numeric outputs (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_trajectories", "plot_histogram", "plot_energy_residuals", "plot_ladder"]

_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_trajectories(times: np.ndarray, norms: list[np.ndarray], path: Path, ylabel: str = "|u(t)|_H") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for i, y in enumerate(norms):
        ax.step(times, y, where="pre", lw=1.0, label=f"path {i}" if i < 6 else None)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    if norms:
        ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_histogram(samples: np.ndarray, name: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bins = max(10, int(np.sqrt(len(samples))))
    ax.hist(samples, bins=bins, density=True, color="0.6", edgecolor="0.3")
    ax.set_xlabel(name)
    ax.set_ylabel("density")
    fig.tight_layout()
    return _save(fig, path)


def plot_energy_residuals(residuals: np.ndarray, path: Path, threshold: float | None = None) -> Path:
    """Per-step absolute energy residuals, one faint line per path."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    steps = np.arange(1, residuals.shape[1] + 1)
    floor = np.finfo(float).tiny
    for r in residuals:
        ax.semilogy(steps, np.maximum(np.abs(r), floor), color="C0", alpha=0.3, lw=0.8)
    if threshold is not None:
        ax.axhline(threshold, color="C3", ls="--", lw=1.0, label="threshold")
        ax.legend(frameon=False)
    ax.set_xlabel("step n")
    ax.set_ylabel("energy residual")
    fig.tight_layout()
    return _save(fig, path)


def plot_ladder(Ns: np.ndarray, means: np.ndarray, ses: np.ndarray, name: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(Ns, means, yerr=4.0 * np.asarray(ses), marker="o", capsize=3)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("N")
    ax.set_ylabel(f"E[{name}]  (4 SE bars)")
    fig.tight_layout()
    return _save(fig, path)
