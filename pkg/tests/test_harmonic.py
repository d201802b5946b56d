import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from spdelab.galerkin import P1Neumann1D_vec3
from spdelab.harmonic import (
    PenaltyFlowProblem,
    chain_rule_check,
    cross_matrix,
    dirichlet_energy,
    energy_moment,
    harmonic_energy_check,
    harmonic_step,
    orthogonality_checks,
    penalty_integral,
    penalty_jacobian,
    penalty_vector,
    run_path,
    sphere_deviation,
    stratonovich_monitor,
)
from spdelab.noise import TimeGrid, gen_increments
from spdelab.solvers import NewtonSettings, NonConvergence

GAMMA = np.array([0.6, 0.0, 0.8])


def _smooth_initial(sp):
    return sp.interpolate(lambda x: np.stack([np.cos(np.pi * x), np.sin(np.pi * x), 0.2 * np.ones_like(x)], -1))


def test_cross_matrix_matches_numpy_cross():
    v = np.array([0.3, -1.2, 2.0])
    assert np.allclose(cross_matrix(GAMMA) @ v, np.cross(v, GAMMA))


def test_penalty_vector_against_adaptive_quadrature():
    sp = P1Neumann1D_vec3(3)
    rng = np.random.default_rng(0)
    un, uo = rng.standard_normal((2, sp.dim))
    vec = penalty_vector(sp, un, uo)

    def integrand(x, node, comp):
        a, b = sp.evaluate(un, x), sp.evaluate(uo, x)
        s = a @ a + b @ b - 2.0
        hat = np.interp(x, sp.nodes, np.eye(sp.n_nodes)[node])
        return s * 0.5 * (a[comp] + b[comp]) * hat

    for node in range(sp.n_nodes):
        for comp in range(3):
            oracle = integrate.quad(integrand, 0, 1, args=(node, comp), points=sp.nodes[1:-1], epsabs=1e-14)[0]
            assert vec[3 * node + comp] == pytest.approx(oracle, abs=1e-12)


def test_penalty_jacobian_against_finite_differences():
    sp = P1Neumann1D_vec3(4)
    rng = np.random.default_rng(1)
    un, uo = rng.standard_normal((2, sp.dim))
    J = penalty_jacobian(sp, un, uo)
    eps = 1e-6
    fd = np.stack([
        (penalty_vector(sp, un + eps * e, uo) - penalty_vector(sp, un - eps * e, uo)) / (2 * eps)
        for e in np.eye(sp.dim)
    ], axis=1)
    assert np.allclose(J, fd, atol=1e-8)


def test_sphere_deviation_and_penalty_integral():
    sp = P1Neumann1D_vec3(5)
    unit = np.tile([0.0, 0.6, 0.8], sp.n_nodes)
    assert sphere_deviation(sp, unit) == pytest.approx(0.0, abs=1e-15)
    double = 2.0 * unit
    # (|u|^2 - 1)^2 = 9 everywhere on (0, 1)
    assert sphere_deviation(sp, double) == pytest.approx(9.0)
    assert penalty_integral(sp, double, 0.5) == pytest.approx(9.0)
    assert penalty_integral(sp, double, np.inf) == 0.0
    assert dirichlet_energy(sp, double, 0.5) == pytest.approx(9.0)


def _constant_state_oracle(uo, tau, eps, xi, gamma):
    """Root of u - uo + (tau/eps)(|u|^2+|uo|^2-2)(u+uo)/2 - xi((u+uo)/2 x gamma) = 0 by continuation in tau."""
    u = uo.copy()
    for s in np.linspace(0.0, 1.0, 21)[1:]:
        def F(v, s=s):
            h = 0.5 * (v + uo)
            return v - uo + (s * tau / eps) * (v @ v + uo @ uo - 2.0) * h - s * xi * np.cross(h, gamma)
        u = optimize.root(F, u, tol=1e-15).x
    return u


def test_constant_state_matches_three_dimensional_oracle():
    sp = P1Neumann1D_vec3(4)
    uo = np.array([1.1, -0.3, 0.5])
    problem = PenaltyFlowProblem(sp, 0.1, GAMMA, np.tile(uo, sp.n_nodes), newton=NewtonSettings(tol=1e-13))
    u, a, info = harmonic_step(problem, problem.u0, np.zeros(sp.dim), 0.37, 0.05)
    oracle = _constant_state_oracle(uo, 0.05, 0.1, 0.37, GAMMA)
    assert np.allclose(sp.nodal(u), oracle[None, :], atol=1e-12)
    # a constant state has zero gradient, so a is the pure penalty force
    assert np.allclose(sp.nodal(a), (oracle @ oracle + uo @ uo - 2) * 0.5 * (oracle + uo) / 0.1, atol=1e-9)


def test_without_penalty_or_noise_the_step_is_a_heat_step():
    sp = P1Neumann1D_vec3(6)
    u0 = _smooth_initial(sp)
    problem = PenaltyFlowProblem(sp, np.inf, GAMMA, u0)
    u, _, _ = harmonic_step(problem, u0, np.zeros(sp.dim), 0.0, 0.02)
    assert np.allclose(u, np.linalg.solve(sp.mass + 0.02 * sp.stiffness, sp.mass @ u0), atol=1e-12)


@pytest.fixture(scope="module")
def harmonic_record():
    sp = P1Neumann1D_vec3(16)
    problem = PenaltyFlowProblem(sp, 0.1, GAMMA, _smooth_initial(sp))
    grid = TimeGrid(1.0, 32)
    return run_path(problem, grid, gen_increments("gaussian", grid, 0, 2))


def test_energy_identity_within_newton_tolerance(harmonic_record):
    chk = harmonic_energy_check(harmonic_record)
    assert chk.max_residual() <= 10 * harmonic_record.aux["tol"]
    assert len(chk.energy) == harmonic_record.grid.N + 1


def test_chain_rule_and_orthogonality_on_every_step(harmonic_record):
    sp, u = harmonic_record.space, harmonic_record.levels
    for n in range(1, len(u)):
        assert chain_rule_check(sp, u[n - 1], u[n], 0.1) <= 1e-12
        orth = orthogonality_checks(sp, u[n - 1], u[n], GAMMA)
        assert orth["penalty_noise"] <= 1e-14
        assert orth["gradient"] <= 1e-14


def test_stratonovich_monitor_fields(harmonic_record):
    rep = stratonovich_monitor(harmonic_record)
    N, dim = harmonic_record.grid.N, harmonic_record.space.dim
    assert rep.correction.shape == (N, dim)
    assert np.isfinite(rep.l43_norm) and rep.l43_norm > 0
    assert rep.drift_distance >= 0 and rep.max_mean_abs > 0


def test_energy_moment(harmonic_record):
    m2 = energy_moment([harmonic_record], 2.0)
    assert m2 > 0
    with pytest.raises(ValueError):
        energy_moment([harmonic_record], 0.5)


def test_problem_validation():
    sp = P1Neumann1D_vec3(2)
    u0 = np.zeros(sp.dim)
    with pytest.raises(ValueError):
        PenaltyFlowProblem(sp, 0.0, GAMMA, u0)
    with pytest.raises(ValueError):
        PenaltyFlowProblem(sp, 0.1, [1.0, 0.0], u0)
    with pytest.raises(ValueError):
        PenaltyFlowProblem(sp, 0.1, GAMMA, np.zeros(4))


def test_non_convergence_is_located():
    sp = P1Neumann1D_vec3(4)
    problem = PenaltyFlowProblem(sp, 1e-3, GAMMA, 3.0 * _smooth_initial(sp),
                                 newton=NewtonSettings(tol=1e-30, max_iter=2, picard_iter=1))
    grid = TimeGrid(1.0, 4)
    with pytest.raises(NonConvergence) as exc:
        run_path(problem, grid, gen_increments("gaussian", grid, 0, 5))
    assert exc.value.path == 5 and exc.value.step == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1.0, 1.0))
def test_chain_rule_holds_for_arbitrary_pairs(seed, shift):
    sp = P1Neumann1D_vec3(5)
    rng = np.random.default_rng(seed)
    uo = rng.standard_normal(sp.dim)
    un = uo + shift * rng.standard_normal(sp.dim)
    assert chain_rule_check(sp, uo, un, 0.3) <= 1e-12
