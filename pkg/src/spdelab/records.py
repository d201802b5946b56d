"""Solved sample paths and their per-step energy bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import IncrementPath, TimeGrid


@dataclass(eq=False)
class EnergyLedger:
    """Terms of ``|u^n|^2 + |u^n - u^{n-1}|^2 + diss_n = |u^{n-1}|^2 + work_n + stoch_n``.

    ``h_sq`` has ``N + 1`` entries, every other array ``N``.
    """

    h_sq: np.ndarray
    inc_sq: np.ndarray
    diss: np.ndarray
    work: np.ndarray
    stoch: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.h_sq[..., 1:] + self.inc_sq + self.diss - self.h_sq[..., :-1] - self.work - self.stoch

    @property
    def relative_residual(self) -> np.ndarray:
        return np.abs(self.residual) / np.maximum(1.0, self.h_sq[..., :-1])

    def max_relative(self) -> float:
        return float(np.max(self.relative_residual)) if self.inc_sq.size else 0.0


def build_ledger(mass: np.ndarray, levels: np.ndarray, tau: float, diss: np.ndarray,
                 f: np.ndarray, g: np.ndarray, xi: np.ndarray) -> EnergyLedger:
    """Ledger from levels ``(..., N+1, dim)``; ``diss`` already includes the factor ``2 tau``.

    ``f`` holds load vectors (dual data) and ``g`` coefficient vectors.
    """
    mu = levels @ mass
    h_sq = np.sum(mu * levels, axis=-1)
    inc = np.diff(levels, axis=-2)
    inc_sq = np.sum((inc @ mass) * inc, axis=-1)
    new = levels[..., 1:, :]
    work = 2.0 * tau * np.sum(f * new, axis=-1)
    stoch = 2.0 * np.sum((g @ mass) * new, axis=-1) * xi
    return EnergyLedger(h_sq, inc_sq, np.asarray(diss, dtype=float), work, stoch)


@dataclass(eq=False)
class TrajectoryRecord:
    """One solved sample path ``u^0 .. u^N`` with the data and noise that produced it.

    ``f[n-1]`` is the load vector of step ``n`` and ``g[n-1]`` the noise
    coefficient paired with ``xi^n``.
    """

    grid: TimeGrid
    levels: np.ndarray
    noise: IncrementPath
    space: object
    f: np.ndarray
    g: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    ledger: EnergyLedger | None = None
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.levels.shape[0] != self.grid.N + 1:
            raise ValueError("record must hold N + 1 levels")
        for name, arr in self.diagnostics.items():
            if len(arr) != self.grid.N:
                raise ValueError(f"diagnostic {name!r} must have N entries")

    @property
    def xi(self) -> np.ndarray:
        return self.noise.values
