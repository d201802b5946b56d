import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from spdelab.galerkin import P1Dirichlet1D, SpectralSine1D
from spdelab.heat import LinearParabolicProblem, heat_step
from spdelab.monotone import MonotoneProblem, ito_balance, monotone_checks, qlap_step, run_path
from spdelab.noise import TimeGrid, gen_increments, rademacher_path
from spdelab.solvers import NewtonSettings, NonConvergence, newton_solve


def test_q2_reduces_to_the_heat_step():
    sp = P1Dirichlet1D(12)
    rng = np.random.default_rng(0)
    u_prev, f, g = rng.standard_normal((3, sp.dim))
    mono = MonotoneProblem(sp, 2.0, u_prev)
    heat = LinearParabolicProblem(sp, u_prev)
    u_q, _ = qlap_step(mono, u_prev, f, g, 0.3, 0.05)
    u_h = heat_step(heat, u_prev, f, g, 0.3, 0.05)
    assert np.max(np.abs(u_q - u_h)) < 1e-8


@pytest.mark.parametrize("q", [1.5, 3.0, 4.0])
def test_one_dof_step_matches_bisection(q):
    # two cells on (0, 1): h = 1/2, mass 1/3, (A(u), phi) = 2 sign(u)|2u|^{q-1}
    sp = P1Dirichlet1D(2)
    tau, u_prev, g, xi = 0.1, 0.7, 0.4, -0.25
    problem = MonotoneProblem(sp, q, np.array([u_prev]), newton=NewtonSettings(tol=1e-14))
    u, info = qlap_step(problem, np.array([u_prev]), np.zeros(1), np.array([g]), xi, tau)

    def scalar(v):
        return (v - u_prev - g * xi) / 3.0 + tau * 2.0 * np.sign(v) * abs(2.0 * v) ** (q - 1.0)

    oracle = optimize.bisect(scalar, -5.0, 5.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    assert u[0] == pytest.approx(oracle, abs=1e-12)
    assert info.residual <= 1e-14


# frozen from the bisection oracle above (q = 4)
Q4_ONE_DOF = 0.36554420943683774


def test_one_dof_frozen_value():
    sp = P1Dirichlet1D(2)
    problem = MonotoneProblem(sp, 4.0, np.array([0.7]), newton=NewtonSettings(tol=1e-14))
    u, _ = qlap_step(problem, np.array([0.7]), np.zeros(1), np.array([0.4]), -0.25, 0.1)
    assert u[0] == pytest.approx(Q4_ONE_DOF, abs=1e-12)


@pytest.mark.parametrize("q", [1.5, 3.0, 4.0])
def test_monotone_checks_pass(q):
    rep = monotone_checks(P1Dirichlet1D(8), q, samples=300, seed=1)
    assert rep.monotone and rep.coercive and rep.bounded and rep.passed
    assert rep.min_coercivity_ratio == pytest.approx(1.0, abs=1e-12)


def test_path_energy_ledger_within_solver_tolerance():
    sp = P1Dirichlet1D(10)
    problem = MonotoneProblem.from_fields(sp, 3.0, u0=lambda x: np.sin(np.pi * x), g=lambda t, x: x * (1 - x))
    grid = TimeGrid(1.0, 16)
    rec = run_path(problem, grid, gen_increments("gaussian", grid, 0, 0))
    # the ledger is exact up to the Newton residual of each step
    assert np.max(np.abs(rec.ledger.residual)) < 10 * problem.newton.tol
    assert np.all(rec.diagnostics["solver_residual"] <= problem.newton.tol)


def test_ito_balance_exhaustive_small_problem():
    sp = P1Dirichlet1D(3)
    problem = MonotoneProblem(sp, 3.0, np.array([0.5, -0.2]), g=lambda t: np.array([0.3, 0.1]))
    grid = TimeGrid(1.0, 6)
    recs = [run_path(problem, grid, rademacher_path(grid, i)) for i in range(2**grid.N)]
    bal = ito_balance(recs, np.full(2**grid.N, 2.0**-grid.N))
    # pathwise the balance is exact up to the accumulated Newton residuals
    assert np.max(np.abs(bal.pathwise_residual)) <= grid.N * problem.newton.tol
    assert abs(bal.gap) < 10 * problem.newton.tol
    assert np.max(np.abs(bal.step_martingale_means)) < 1e-15
    with pytest.raises(ValueError):
        ito_balance([])


def test_problem_validation():
    with pytest.raises(ValueError):
        MonotoneProblem(P1Dirichlet1D(3), 1.0, np.zeros(2))
    with pytest.raises(TypeError):
        MonotoneProblem(SpectralSine1D(3), 3.0, np.zeros(3))


def test_non_convergence_reports_location():
    sp = P1Dirichlet1D(6)
    problem = MonotoneProblem.from_fields(
        sp, 4.0, u0=lambda x: np.sin(np.pi * x), newton=NewtonSettings(tol=1e-30, max_iter=3, picard_iter=2)
    )
    grid = TimeGrid(1.0, 4)
    with pytest.raises(NonConvergence) as exc:
        run_path(problem, grid, gen_increments("gaussian", grid, 0, 9))
    assert exc.value.path == 9 and exc.value.step == 1
    assert "path 9, step 1" in str(exc.value)


def test_newton_solve_scalar_and_settings():
    x, info = newton_solve(lambda x: x**3 - 8.0, lambda x: np.diag(3 * x**2), np.array([1.0]), NewtonSettings())
    assert x[0] == pytest.approx(2.0) and info.method == "newton"
    with pytest.raises(ValueError):
        NewtonSettings(tol=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iter=0)


def test_picard_fallback_is_used_when_newton_is_unusable():
    # singular Jacobian forces the fallback
    def jac(x):
        raise np.linalg.LinAlgError("singular")

    x, info = newton_solve(lambda x: x - 1.0, jac, np.array([0.0]), NewtonSettings(), picard=lambda x: x * 0 + 1.0)
    assert info.method == "picard" and x[0] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(1.2, 5.0), st.floats(-2, 2), st.integers(0, 2**31))
def test_step_residual_below_tolerance(q, xi, seed):
    sp = P1Dirichlet1D(5)
    rng = np.random.default_rng(seed)
    u_prev, g = rng.standard_normal((2, sp.dim))
    problem = MonotoneProblem(sp, q, u_prev)
    u, info = qlap_step(problem, u_prev, np.zeros(sp.dim), g, xi, 0.05)
    M = sp.mass
    r = M @ (u - u_prev) + 0.05 * problem.apply(u) - (M @ g) * xi
    assert np.linalg.norm(r) <= problem.newton.tol
