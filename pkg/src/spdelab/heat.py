"""Implicit Euler Galerkin solver for the linear stochastic heat equation with additive noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .galerkin import GalerkinSpace, l2_project, time_average_data
from .noise import IncrementPath, TimeGrid
from .records import EnergyLedger, TrajectoryRecord, build_ledger

__all__ = [
    "LinearParabolicProblem",
    "heat_step",
    "run_path",
    "run_paths",
    "step_data",
    "estimate_coercivity",
]


@dataclass(eq=False)
class LinearParabolicProblem:
    """``du + A u dt = f dt + g dW`` with ``a(u, v) = (grad u, grad v)``.

    ``f(t)`` returns a load vector (the functional ``v -> (f(t), v)``) and
    ``g(t)`` a coefficient vector in the space; either may be ``None``.
    """

    space: GalerkinSpace
    u0: np.ndarray
    f: Callable[[float], np.ndarray] | None = None
    g: Callable[[float], np.ndarray] | None = None
    _factors: dict = field(default_factory=dict, repr=False)
    _step_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.space.dim,):
            raise ValueError(f"u0 has length {self.u0.size}, space dim is {self.space.dim}")

    @classmethod
    def from_fields(cls, space: GalerkinSpace, u0: Callable | None = None,
                    f: Callable | None = None, g: Callable | None = None) -> "LinearParabolicProblem":
        """Build from spatial fields ``u0(x)``, ``f(t, x)`` and ``g(t, x)``."""
        c0 = l2_project(space, u0) if u0 is not None else np.zeros(space.dim)
        f_load = (lambda t: space.load(lambda x: f(t, x))) if f is not None else None
        g_coef = (lambda t: l2_project(space, lambda x: g(t, x))) if g is not None else None
        return cls(space, c0, f_load, g_coef)

    def factor(self, tau: float):
        """Cached Cholesky factor of ``M + tau K``."""
        if tau not in self._factors:
            try:
                self._factors[tau] = sla.cho_factor(self.space.mass + tau * self.space.stiffness)
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"M + tau K is not SPD (assembly bug?): {exc}") from exc
        return self._factors[tau]

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sum((u @ self.space.stiffness) * v, axis=-1)


def step_data(problem, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Per-step data: load vectors ``f^n`` and noise coefficients ``g^{n-1}``, both ``(N, dim)``.

    Both are averages over ``(t^{n-1}, t^n]``; the noise coefficient carries
    the lagged index because it is paired with ``xi^n``. Results are cached
    per grid on the problem (arrays are read-only).
    """
    cache = getattr(problem, "_step_cache", None)
    if cache is not None and grid in cache:
        return cache[grid]
    dim = problem.space.dim
    f = time_average_data(problem.f, grid) if problem.f is not None else np.zeros((grid.N, dim))
    g = time_average_data(problem.g, grid) if problem.g is not None else np.zeros((grid.N, dim))
    f, g = f.reshape(grid.N, dim), g.reshape(grid.N, dim)
    f.setflags(write=False)
    g.setflags(write=False)
    if cache is not None:
        cache[grid] = (f, g)
    return f, g


def heat_step(problem: LinearParabolicProblem, u_prev: np.ndarray, f_n: np.ndarray,
              g_prev: np.ndarray, xi_n, tau: float) -> np.ndarray:
    """Solve ``(M + tau K) u = M u_prev + tau f_n + M g_prev xi_n``.

    Batched use: ``u_prev`` of shape ``(dim, P)`` with ``xi_n`` of shape ``(P,)``.
    """
    M = problem.space.mass
    u_prev = np.asarray(u_prev, dtype=float)
    f_n = np.asarray(f_n, dtype=float)
    rhs = M @ u_prev + np.multiply.outer(M @ g_prev, np.asarray(xi_n, dtype=float))
    rhs += tau * (f_n[:, None] if u_prev.ndim == 2 else f_n)
    return sla.cho_solve(problem.factor(tau), rhs)


def run_paths(problem: LinearParabolicProblem, grid: TimeGrid, xi: np.ndarray):
    """March ``P`` paths at once; ``xi`` has shape ``(P, N)``.

    Returns ``(levels, f, g, ledger)`` with ``levels`` of shape ``(P, N+1, dim)``
    and a ledger whose arrays carry a leading path axis.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    P, N = xi.shape
    if N != grid.N:
        raise ValueError(f"noise has {N} steps, grid has {grid.N}")
    f, g = step_data(problem, grid)
    tau = grid.tau
    dim = problem.space.dim
    levels = np.empty((N + 1, dim, P))
    levels[0] = problem.u0[:, None]
    for n in range(1, N + 1):
        levels[n] = heat_step(problem, levels[n - 1], f[n - 1], g[n - 1], xi[:, n - 1], tau)
    levels = np.transpose(levels, (2, 0, 1))
    diss = 2.0 * tau * problem.bilinear(levels[:, 1:], levels[:, 1:])
    ledger = build_ledger(problem.space.mass, levels, tau, diss, f, g, xi)
    return levels, f, g, ledger


def run_path(problem: LinearParabolicProblem, grid: TimeGrid, noise: IncrementPath) -> TrajectoryRecord:
    if noise.grid != grid:
        raise ValueError("noise was generated on a different grid")
    levels, f, g, ledger = run_paths(problem, grid, noise.values[None, :])
    single = EnergyLedger(ledger.h_sq[0], ledger.inc_sq[0], ledger.diss[0], ledger.work[0], ledger.stoch[0])
    diagnostics = {"energy_residual": single.relative_residual}
    return TrajectoryRecord(grid, levels[0], noise, problem.space, f, g, diagnostics, single)


def estimate_coercivity(space: GalerkinSpace, samples: int = 100, seed: int = 0) -> float:
    """Smallest observed ``a(v, v) / |v|_U^2`` over random coefficient vectors."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((samples, space.dim))
    a = np.sum((v @ space.stiffness) * v, axis=1)
    un = a + np.sum((v @ space.mass) * v, axis=1)
    return float(np.min(a / un))
