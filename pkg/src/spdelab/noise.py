"""Stochastic increments, discrete Wiener processes and discrete Ito integrals.

Increments are drawn from a counter-based Philox generator keyed by
``(seed, stream_id)``, so every path of an ensemble owns an independent,
order-insensitive stream and a path can be regenerated in isolation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IncrementKind",
    "TimeGrid",
    "IncrementPath",
    "ItoPath",
    "make_generator",
    "gen_increments",
    "rademacher_path",
    "rademacher_enumeration",
    "coarsen",
    "discrete_wiener",
    "discrete_ito",
    "ito_levels",
    "quadratic_variation",
    "increment_moment",
    "uniform_moment",
]

_MASK64 = (1 << 64) - 1


class IncrementKind(str, enum.Enum):
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, kind: "IncrementKind | str") -> "IncrementKind":
        if isinstance(kind, cls):
            return kind
        key = str(kind).strip().lower()
        aliases = {"uniformscaled": "uniform", "uniform_scaled": "uniform", "normal": "gaussian"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unsupported increment kind {kind!r}") from None


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, T]`` into ``N`` steps."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"time horizon must be positive, got T={self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"step count must be a positive integer, got N={self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        # T * n / N keeps times[N] == T exactly
        return self.T * np.arange(self.N + 1) / self.N


@dataclass(frozen=True, eq=False)
class IncrementPath:
    kind: IncrementKind
    grid: TimeGrid
    values: np.ndarray
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} increments, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, IncrementPath):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.grid == other.grid
            and self.seed == other.seed
            and self.stream_id == other.stream_id
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ItoPath:
    """Levels ``X^0 .. X^N`` of a discrete Ito integral, shape ``(N+1, d)``."""

    grid: TimeGrid | None
    levels: np.ndarray
    integrand: np.ndarray | None = field(default=None, repr=False)

    @property
    def integrand_dim(self) -> int:
        return self.levels.shape[1]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.levels, axis=0)


def make_generator(seed: int, stream_id: int) -> np.random.Generator:
    """Philox generator keyed by the 128-bit pair ``(seed, stream_id)``."""
    key = np.array([int(seed) & _MASK64, int(stream_id) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def gen_increments(
    kind: IncrementKind | str, grid: TimeGrid, seed: int = 0, stream_id: int = 0
) -> IncrementPath:
    """Draw ``N`` i.i.d. increments with mean 0 and variance ``tau``.

    Rademacher values are exactly ``+-sqrt(tau)``; uniform values are
    ``sqrt(12 tau) (b - 1/2)`` with ``b ~ U(0, 1)``; Gaussian values are
    ``sqrt(tau) Z``.
    """
    kind = IncrementKind.parse(kind)
    rng = make_generator(seed, stream_id)
    values = _draw(kind, grid.tau, grid.N, rng)
    return IncrementPath(kind, grid, values, seed=int(seed), stream_id=int(stream_id))


def _draw(kind: IncrementKind, tau: float, size, rng: np.random.Generator) -> np.ndarray:
    if kind is IncrementKind.RADEMACHER:
        signs = 2.0 * rng.integers(0, 2, size=size) - 1.0
        return signs * np.sqrt(tau)
    if kind is IncrementKind.UNIFORM:
        return np.sqrt(12.0 * tau) * (rng.random(size) - 0.5)
    return np.sqrt(tau) * rng.standard_normal(size)


def rademacher_path(grid: TimeGrid, index: int) -> IncrementPath:
    """The ``index``-th sign path in enumeration order (bit ``n`` of ``index`` -> step ``n+1``)."""
    if not 0 <= index < 2**grid.N:
        raise ValueError(f"path index {index} outside [0, 2^{grid.N})")
    bits = (int(index) >> np.arange(grid.N)) & 1
    values = (2.0 * bits - 1.0) * np.sqrt(grid.tau)
    return IncrementPath(IncrementKind.RADEMACHER, grid, values, seed=0, stream_id=int(index))


def coarsen(incs: IncrementPath, grid: TimeGrid) -> IncrementPath:
    """Sum blocks of consecutive increments onto a coarser grid with the same ``T``.

    For Gaussian increments the result has exactly the Gaussian law on the
    coarse grid, which couples the levels of a refinement ladder pathwise.
    """
    if grid.T != incs.grid.T or incs.grid.N % grid.N:
        raise ValueError(f"grid with N={grid.N} is not a coarsening of N={incs.grid.N}")
    if incs.kind is not IncrementKind.GAUSSIAN and grid.N != incs.grid.N:
        raise ValueError("only Gaussian increments keep their law under coarsening")
    r = incs.grid.N // grid.N
    values = incs.values.reshape(grid.N, r).sum(axis=1)
    return IncrementPath(incs.kind, grid, values, incs.seed, incs.stream_id)


def rademacher_enumeration(grid: TimeGrid) -> np.ndarray:
    """All ``2^N`` Rademacher paths as a ``(2^N, N)`` array; each has probability ``2^-N``."""
    if grid.N > 24:
        raise ValueError("enumeration is limited to N <= 24")
    idx = np.arange(2**grid.N)[:, None]
    bits = (idx >> np.arange(grid.N)[None, :]) & 1
    return (2.0 * bits - 1.0) * np.sqrt(grid.tau)


def ito_levels(g: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Vectorised ``X^n = sum_{m<=n} g^{m-1} xi^m``.

    ``g`` has shape ``(..., N, d)`` and ``xi`` shape ``(..., N)``; the result
    has shape ``(..., N+1, d)`` with a zero first level. ``N = 0`` is allowed.
    """
    g = np.asarray(g, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if g.shape[:-1] != xi.shape:
        raise ValueError(f"integrand shape {g.shape} does not match increments {xi.shape}")
    steps = g * xi[..., None]
    zero = np.zeros(steps.shape[:-2] + (1, steps.shape[-1]))
    return np.concatenate([zero, np.cumsum(steps, axis=-2)], axis=-2)


def discrete_wiener(incs: IncrementPath) -> ItoPath:
    levels = ito_levels(np.ones((incs.grid.N, 1)), incs.values)
    return ItoPath(incs.grid, levels, integrand=np.ones((incs.grid.N, 1)))


def discrete_ito(
    g: np.ndarray | Sequence | Callable[[int, np.ndarray], np.ndarray], incs: IncrementPath
) -> ItoPath:
    """Discrete Ito integral of ``g`` against ``incs``.

    ``g`` is either an array of ``N`` integrand values ``g^0 .. g^{N-1}``
    (scalars or vectors of equal dimension) or a callable
    ``g(m, past)`` returning ``g^m`` from the increments ``xi^1 .. xi^m``
    only; the callable form makes adaptedness structural.
    """
    N = incs.grid.N
    if callable(g):
        g = np.array([np.atleast_1d(g(m, incs.values[:m].copy())) for m in range(N)], dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2 or g.shape[0] != N:
        raise ValueError(f"integrand must have {N} entries, got shape {g.shape}")
    return ItoPath(incs.grid, ito_levels(g, incs.values), integrand=g)


def quadratic_variation(
    g: np.ndarray, grid: TimeGrid, u: np.ndarray, v: np.ndarray, n: int, inner: np.ndarray | None = None
) -> float:
    """``<X^n>(u, v) = sum_{m=1}^n tau (g^{m-1}, u)(g^{m-1}, v)``.

    ``inner`` is an optional Gram matrix for the pairing; Euclidean otherwise.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != grid.N:
        raise ValueError(f"integrand must have {grid.N} entries, got {g.shape[0]}")
    if not 0 <= n <= grid.N:
        raise IndexError(f"step index {n} outside [0, {grid.N}]")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != (g.shape[1],) or v.shape != (g.shape[1],):
        raise ValueError("test vectors must match the integrand dimension")
    if inner is not None:
        u, v = inner @ u, inner @ v
    head = g[:n]
    return float(grid.tau * np.sum((head @ u) * (head @ v)))


def uniform_moment(tau: float, p: float) -> float:
    """Exact ``E|xi|^p`` for the scaled uniform increment."""
    return (3.0 * tau) ** (p / 2.0) / (p + 1.0)


def increment_moment(
    kind: IncrementKind | str, tau: float, p: float, samples: int, seed: int = 0, stream_id: int = 0
) -> dict:
    """Sample ``E|xi|^p`` with its standard error and the implied constant ``C`` in ``E|xi|^p <= C tau^{p/2}``."""
    kind = IncrementKind.parse(kind)
    xi = _draw(kind, tau, samples, make_generator(seed, stream_id))
    a = np.abs(xi) ** p
    mean = float(a.mean())
    se = float(a.std(ddof=1) / np.sqrt(samples))
    return {"p": p, "moment": mean, "std_error": se, "C": mean / tau ** (p / 2.0), "samples": samples}
