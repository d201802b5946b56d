"""Stochastic Navier-Stokes on the 2-torus with divergence-free Fourier modes.

Convection uses the skew-symmetric form ``b(u, w, v) = 1/2((u.grad)w, v) -
1/2(w, (u.grad)v)`` so ``b(u, w, w) = 0`` holds algebraically and the energy
identity is exact for both the fully implicit and the semi-implicit step.
Every basis element is divergence-free, so no pressure is computed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .galerkin import FourierDivFree2D, time_average_data, trilinear_skew
from .noise import IncrementPath, TimeGrid
from .records import TrajectoryRecord, build_ledger
from .solvers import NewtonSettings, NonConvergence, SolveInfo, newton_solve

__all__ = [
    "Stepping",
    "NSProblem2D",
    "validate_envelope",
    "multiplicative_noise_eval",
    "ns_step",
    "run_path",
    "skew_symmetry_check",
    "convection_defect",
    "ns_energy_check",
    "divergence_max",
    "growth_envelope_check",
    "rotation_equivariance_gap",
    "stepping_gap",
]

NOISE_TIME_POINTS = 4


class Stepping(str, enum.Enum):
    SEMI_IMPLICIT = "semi"
    FULLY_IMPLICIT = "implicit"


VectorField = Callable[..., tuple]


@dataclass(eq=False)
class NSProblem2D:
    """``du + ((u.grad)u - div(2 mu D(u))) dt = f dt + gamma(t, x, u) dW``, ``div u = 0``.

    ``f(t, X, Y) -> (fx, fy)``; ``gamma_fn(t, X, Y, U1, U2) -> (gx, gy)``
    must satisfy ``|gamma| <= C_growth |u| + k_fn(t, X, Y)``, which is
    checked at random probes on construction.
    """

    space: FourierDivFree2D
    mu: float
    u0: np.ndarray
    f: VectorField | None = None
    gamma_fn: VectorField | None = None
    C_growth: float = 0.0
    k_fn: Callable | None = None
    stepping: Stepping = Stepping.SEMI_IMPLICIT
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"viscosity must be positive, got {self.mu}")
        self.stepping = Stepping(self.stepping)
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.shape != (self.space.dim,):
            raise ValueError("u0 does not match the space")
        if self.C_growth < 0:
            raise ValueError("growth constant must be nonnegative")
        if self.gamma_fn is not None:
            validate_envelope(self)

    def k_values(self, t: float, X, Y) -> np.ndarray:
        if self.k_fn is None:
            return np.zeros(np.shape(X))
        return np.broadcast_to(np.asarray(self.k_fn(t, X, Y), dtype=float), np.shape(X))

    def viscous(self) -> np.ndarray:
        return self.mu * self.space.stiffness


def validate_envelope(problem: NSProblem2D, probes: int = 1000, T: float = 1.0, seed: int = 0) -> float:
    """Largest ``|gamma| - (C |u| + k)`` over random probes; raises if positive beyond rounding."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, T, probes)
    X, Y = rng.uniform(0.0, 2 * np.pi, (2, probes))
    U = rng.standard_normal((2, probes)) * 10.0 ** rng.uniform(-3, 3, probes)
    excess = np.empty(probes)
    for i in range(probes):
        gx, gy = problem.gamma_fn(t[i], X[i], Y[i], U[0, i], U[1, i])
        g = np.hypot(gx, gy)
        bound = problem.C_growth * np.hypot(U[0, i], U[1, i]) + float(problem.k_values(t[i], X[i], Y[i]))
        excess[i] = g - bound
        if not np.isfinite(g):
            raise ValueError(f"noise coefficient is not finite at probe {i}")
        if g > bound * (1 + 1e-12) + 1e-12:
            raise ValueError(
                f"noise coefficient violates its growth envelope at t={t[i]:.3g}: |gamma|={g:.3e} > {bound:.3e}"
            )
    return float(excess.max())


def _time_nodes(t0: float, t1: float):
    s, w = leggauss(NOISE_TIME_POINTS)
    return t0 + 0.5 * (s + 1.0) * (t1 - t0), 0.5 * w


def multiplicative_noise_eval(problem: NSProblem2D, u_prev: np.ndarray, t0: float, t1: float) -> np.ndarray:
    """Projection of ``(1/tau) int_{t0}^{t1} gamma(s, x, u_prev(x)) ds``; depends on ``u_prev`` only."""
    sp = problem.space
    if problem.gamma_fn is None:
        return np.zeros(sp.dim)
    p = sp.proj
    X, Y = p["X"], p["Y"]
    U1, U2 = p["Ex"] @ u_prev, p["Ey"] @ u_prev
    gx = np.zeros_like(X)
    gy = np.zeros_like(X)
    for s, w in zip(*_time_nodes(t0, t1)):
        a, b = problem.gamma_fn(s, X, Y, U1, U2)
        gx += w * np.broadcast_to(a, X.shape)
        gy += w * np.broadcast_to(b, X.shape)
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
        raise ValueError("noise coefficient evaluation produced non-finite values")
    return p["area"] * (p["Ex"].T @ gx + p["Ey"].T @ gy)


def ns_step(problem: NSProblem2D, u_prev: np.ndarray, f_n: np.ndarray, g_prev: np.ndarray,
            xi_n: float, tau: float) -> tuple[np.ndarray, SolveInfo]:
    """One step; ``f_n`` is a load vector and ``g_prev`` the projected noise coefficient."""
    sp = problem.space
    A = np.eye(sp.dim) + tau * problem.viscous()
    rhs = u_prev + tau * f_n + g_prev * xi_n
    if problem.stepping is Stepping.SEMI_IMPLICIT:
        L = A + tau * sp.skew_convection_matrix(u_prev)
        u = np.linalg.solve(L, rhs)
        return u, SolveInfo(1, float(np.linalg.norm(L @ u - rhs)), "linear")

    def residual(u):
        return A @ u + tau * sp.skew_convection(u) - rhs

    def jacobian(u):
        return A + tau * sp.skew_convection_jacobian(u)

    def picard(u):
        return np.linalg.solve(A + tau * sp.skew_convection_matrix(u), rhs)

    return newton_solve(residual, jacobian, u_prev + g_prev * xi_n, problem.newton, picard)


def _forcing(problem: NSProblem2D, grid: TimeGrid) -> np.ndarray:
    sp = problem.space
    if problem.f is None:
        return np.zeros((grid.N, sp.dim))
    return time_average_data(lambda t: sp.load(lambda X, Y: problem.f(t, X, Y)), grid).reshape(grid.N, sp.dim)


def run_path(problem: NSProblem2D, grid: TimeGrid, noise: IncrementPath) -> TrajectoryRecord:
    sp = problem.space
    N, tau, times = grid.N, grid.tau, grid.times
    f = _forcing(problem, grid)
    g = np.zeros((N, sp.dim))
    levels = np.empty((N + 1, sp.dim))
    levels[0] = problem.u0
    iters = np.zeros(N, dtype=int)
    res = np.zeros(N)
    for n in range(1, N + 1):
        g[n - 1] = multiplicative_noise_eval(problem, levels[n - 1], times[n - 1], times[n])
        try:
            levels[n], info = ns_step(problem, levels[n - 1], f[n - 1], g[n - 1], noise.values[n - 1], tau)
        except NonConvergence as exc:
            raise exc.at(path=noise.stream_id, step=n)
        iters[n - 1], res[n - 1] = info.iterations, info.residual
    diss = 2.0 * tau * np.sum((levels[1:] @ problem.viscous()) * levels[1:], axis=1)
    ledger = build_ledger(sp.mass, levels, tau, diss, f, g, noise.values)
    aux = {"mu": problem.mu, "stepping": problem.stepping.value}
    return TrajectoryRecord(grid, levels, noise, sp, f, g, {"iterations": iters, "solver_residual": res},
                            ledger, aux)


def skew_symmetry_check(space: FourierDivFree2D, u: np.ndarray, w: np.ndarray) -> float:
    """``b(u, w, w)``, which vanishes identically for the skew form."""
    return trilinear_skew(space, u, w, w)


def convection_defect(space: FourierDivFree2D, w: np.ndarray, advect) -> float:
    """Non-skew pairing ``((a.grad)w, w)`` for an arbitrary advecting field ``a``.

    ``advect`` is a coefficient vector of the space or a callable
    ``(X, Y) -> (ax, ay)`` sampled on the quadrature grid. For a field with
    nonzero divergence the value is generically nonzero, whereas the skew
    form vanishes for any ``a``; this is the negative control for the skew identity.
    """
    q = space.quad
    if callable(advect):
        ax, ay = (np.broadcast_to(np.asarray(v, dtype=float), q["X"].shape) for v in advect(q["X"], q["Y"]))
    else:
        ax, ay = q["Ex"] @ advect, q["Ey"] @ advect
    fw = space.quad_fields(w)
    adv_x = ax * fw["xx"] + ay * fw["yx"]
    adv_y = ax * fw["xy"] + ay * fw["yy"]
    return space.cell_area * float(adv_x @ fw["Ex"] + adv_y @ fw["Ey"])


def ns_energy_check(record: TrajectoryRecord) -> np.ndarray:
    """Per-step residual of
    ``1/2|u^n|^2 + 1/2|u^n - u^{n-1}|^2 + tau mu |u^n|_U^2 = 1/2|u^{n-1}|^2 + tau (f^n, u^n) + (g^{n-1}, u^n) xi^n``.
    """
    return 0.5 * record.ledger.residual


def divergence_max(record: TrajectoryRecord, n_grid: int = 64) -> float:
    """Largest pointwise ``|div u^n|`` over all levels on a uniform ``n_grid`` grid."""
    sp = record.space
    X, Y = sp.grid_points(n_grid)
    _, _, d = sp.basis_at(X, Y, derivs=True)
    D = d["xx"] + d["yy"]
    return float(np.max(np.abs(record.levels @ D.T)))


def growth_envelope_check(problem: NSProblem2D, record: TrajectoryRecord) -> np.ndarray:
    """Per-step slack ``C |u^{n-1}| + |k| - |g^{n-1}|`` (nonnegative when the envelope holds).

    ``|k|`` is the time average of the discrete L^2 norm on the projection grid.
    """
    sp = problem.space
    p = sp.proj
    times = record.grid.times
    slack = np.empty(record.grid.N)
    for n in range(1, record.grid.N + 1):
        kn = sum(w * np.sqrt(p["area"] * np.sum(problem.k_values(s, p["X"], p["Y"]) ** 2))
                 for s, w in zip(*_time_nodes(times[n - 1], times[n])))
        slack[n - 1] = (problem.C_growth * np.linalg.norm(record.levels[n - 1]) + kn
                        - np.linalg.norm(record.g[n - 1]))
    return slack


def rotation_equivariance_gap(problem: NSProblem2D, u: np.ndarray, tau: float) -> float:
    """``|step(R u) - R step(u)|`` for the deterministic step (f = 0, no noise)."""
    sp = problem.space
    zero = np.zeros(sp.dim)
    a, _ = ns_step(problem, sp.rotate90(u), zero, zero, 0.0, tau)
    b, _ = ns_step(problem, u, zero, zero, 0.0, tau)
    return float(np.linalg.norm(a - sp.rotate90(b)))


def stepping_gap(problem: NSProblem2D, grid: TimeGrid, noise: IncrementPath) -> float:
    """Pathwise ``max_n |u^n_implicit - u^n_semi|`` on the same noise."""
    kwargs = dict(space=problem.space, mu=problem.mu, u0=problem.u0, f=problem.f,
                  gamma_fn=problem.gamma_fn, C_growth=problem.C_growth, k_fn=problem.k_fn,
                  newton=problem.newton)
    semi = run_path(NSProblem2D(stepping=Stepping.SEMI_IMPLICIT, **kwargs), grid, noise)
    impl = run_path(NSProblem2D(stepping=Stepping.FULLY_IMPLICIT, **kwargs), grid, noise)
    return float(np.max(np.linalg.norm(semi.levels - impl.levels, axis=1)))
