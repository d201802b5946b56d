"""Shared machinery for discrete trial spaces."""

from __future__ import annotations

from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
from numpy.polynomial.legendre import leggauss

from ..noise import TimeGrid


class Norms(NamedTuple):
    h_norm: float
    u_norm: float
    dual_norm: float


class GalerkinSpace:
    """Finite-dimensional trial space ``U_h`` with pivot pairing ``(., .)_H``.

    Subclasses supply ``dim``, ``_mass()``, ``_stiffness()`` and ``load()``.
    Assembled matrices and factorizations are computed once and cached; they
    are read-only afterwards.
    """

    variant: str = "abstract"
    dim: int

    def _mass(self) -> np.ndarray:
        raise NotImplementedError

    def _stiffness(self) -> np.ndarray:
        raise NotImplementedError

    def load(self, target: Callable) -> np.ndarray:
        """Load vector ``b_i = (target, phi_i)_H``."""
        raise NotImplementedError

    @cached_property
    def mass(self) -> np.ndarray:
        m = self._mass()
        m.setflags(write=False)
        return m

    @cached_property
    def stiffness(self) -> np.ndarray:
        k = self._stiffness()
        k.setflags(write=False)
        return k

    @cached_property
    def mass_factor(self):
        return sla.cho_factor(self.mass)

    @cached_property
    def energy_factor(self):
        """Cholesky factor of ``K + M`` (the ``U`` inner product)."""
        return sla.cho_factor(self.stiffness + self.mass)

    def solve_mass(self, b: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self.mass_factor, b)

    def dual_norm_of(self, r: np.ndarray) -> float:
        """``sup_v r(v) / |v|_U`` for a functional given by its load vector ``r``."""
        r = np.asarray(r, dtype=float)
        return float(np.sqrt(max(r @ sla.cho_solve(self.energy_factor, r), 0.0)))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def assemble_mass(space: GalerkinSpace) -> np.ndarray:
    return space.mass


def assemble_stiffness(space: GalerkinSpace) -> np.ndarray:
    return space.stiffness


def l2_project(space: GalerkinSpace, target: Callable) -> np.ndarray:
    """H-orthogonal projection: solve ``M c = b`` with ``b_i = (target, phi_i)_H``."""
    try:
        b = space.load(target)
    except Exception as exc:
        raise ValueError(f"target could not be integrated against the basis: {exc}") from exc
    if not np.all(np.isfinite(b)):
        raise ValueError("target produced non-finite quadrature values")
    return space.solve_mass(b)


def norms(space: GalerkinSpace, u: np.ndarray) -> Norms:
    """H norm, U norm and the exact discrete dual norm of a coefficient vector."""
    u = np.asarray(u, dtype=float)
    if u.shape != (space.dim,):
        raise ValueError(f"coefficient vector of length {u.size} does not match dim {space.dim}")
    mu = space.mass @ u
    h = float(np.sqrt(max(u @ mu, 0.0)))
    un = float(np.sqrt(max(u @ (space.stiffness @ u) + u @ mu, 0.0)))
    return Norms(h, un, space.dual_norm_of(mu))


def time_average_data(field: Callable[[float], np.ndarray], grid: TimeGrid, order: int = 8) -> np.ndarray:
    """Cell averages ``f^n = (1/tau) int_{t^{n-1}}^{t^n} f(s) ds``, n = 1..N.

    Uses ``order``-point Gauss-Legendre per cell (exact for polynomials of
    degree ``2 order - 1``).
    """
    x, w = leggauss(order)
    times = grid.times
    out = []
    for n in range(1, grid.N + 1):
        a, b = times[n - 1], times[n]
        nodes = 0.5 * (b - a) * (x + 1.0) + a
        try:
            vals = [np.asarray(field(float(s)), dtype=float) for s in nodes]
        except Exception as exc:
            raise ValueError(f"data field failed to evaluate on ({a}, {b}]: {exc}") from exc
        out.append(0.5 * sum(wi * vi for wi, vi in zip(w, vals)))
    return np.array(out)


def gauss_cell(order: int):
    """Gauss-Legendre nodes/weights mapped to the reference cell ``[0, 1]``."""
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w
