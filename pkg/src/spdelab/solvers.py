"""Damped Newton iteration with a Picard fallback for the per-step nonlinear systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    picard_iter: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"Newton tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


class NonConvergence(RuntimeError):
    """A step's nonlinear solve did not reach tolerance; retry with a smaller step."""

    def __init__(self, residual: float, iterations: int, path: int | None = None, step: int | None = None):
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.path = path
        self.step = step
        super().__init__(self._message())

    def _message(self) -> str:
        where = []
        if self.path is not None:
            where.append(f"path {self.path}")
        if self.step is not None:
            where.append(f"step {self.step}")
        loc = f" at {', '.join(where)}" if where else ""
        return f"nonlinear solve failed{loc}: residual {self.residual:.3e} after {self.iterations} iterations"

    def at(self, path: int | None = None, step: int | None = None) -> "NonConvergence":
        if path is not None:
            self.path = path
        if step is not None:
            self.step = step
        self.args = (self._message(),)
        return self


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    method: str


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    settings: NewtonSettings,
    picard: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, SolveInfo]:
    """Solve ``residual(x) = 0``.

    Newton steps are damped by halving until the Euclidean residual norm
    decreases (at most ``max_halvings`` times); if the line search stalls or
    the iteration budget runs out, ``picard`` (a lagged-coefficient update
    ``x -> x_new``) is iterated. Raises :class:`NonConvergence` if neither
    reaches ``settings.tol``.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    rn = float(np.linalg.norm(r))
    it = 0
    while rn > settings.tol and it < settings.max_iter:
        it += 1
        try:
            dx = np.linalg.solve(jacobian(x), -r)
        except np.linalg.LinAlgError:
            break
        alpha, accepted = 1.0, False
        for _ in range(settings.max_halvings + 1):
            x_try = x + alpha * dx
            r_try = residual(x_try)
            rn_try = float(np.linalg.norm(r_try))
            if np.isfinite(rn_try) and rn_try < (1.0 - 1e-4 * alpha) * rn:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        x, r, rn = x_try, r_try, rn_try
    if rn <= settings.tol:
        return x, SolveInfo(it, rn, "newton")
    if picard is not None:
        for k in range(settings.picard_iter):
            x = picard(x)
            r = residual(x)
            rn = float(np.linalg.norm(r))
            if rn <= settings.tol:
                return x, SolveInfo(it + k + 1, rn, "picard")
        it += settings.picard_iter
    raise NonConvergence(rn, it)
