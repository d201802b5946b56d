import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from spdelab.galerkin import FourierDivFree2D, trilinear_skew
from spdelab.navier_stokes import (
    NSProblem2D,
    Stepping,
    convection_defect,
    divergence_max,
    growth_envelope_check,
    multiplicative_noise_eval,
    ns_energy_check,
    ns_step,
    rotation_equivariance_gap,
    run_path,
    skew_symmetry_check,
    stepping_gap,
)
from spdelab.noise import TimeGrid, gen_increments
from spdelab.solvers import NewtonSettings


def _mode_index(sp, k, parity):
    hits = np.where((sp.kvec[:, 0] == k[0]) & (sp.kvec[:, 1] == k[1]) & (sp.parity == parity))[0]
    return int(hits[0])


def _shear_field(sp):
    # sin(y) e_x: wavevector (0, 1), k_perp = (-1, 0), basis sin(y)(-1, 0)/(pi sqrt 2)
    c = np.zeros(sp.dim)
    c[_mode_index(sp, (0, 1), 1)] = -np.pi * np.sqrt(2.0)
    return c


def _multiplicative(t, X, Y, U1, U2):
    return 0.2 * U1, 0.2 * U2


@pytest.mark.parametrize("stepping", ["semi", "implicit"])
def test_shear_mode_decays_like_the_exact_recursion(stepping):
    sp = FourierDivFree2D(2)
    u0 = _shear_field(sp)
    problem = NSProblem2D(sp, 0.1, u0, stepping=stepping)
    grid = TimeGrid(1.0, 10)
    rec = run_path(problem, grid, gen_increments("gaussian", grid))
    factor = (1.0 + grid.tau * 0.1) ** -np.arange(11)
    assert np.allclose(rec.levels, np.outer(factor, u0), atol=1e-13)


def test_shear_field_coefficients_reproduce_sin_y():
    sp = FourierDivFree2D(2)
    X, Y = sp.grid_points(9)
    ux, uy = sp.evaluate(_shear_field(sp), X, Y)
    assert np.allclose(ux, np.sin(Y)) and np.allclose(uy, 0.0)
    assert np.allclose(sp.load(lambda X, Y: (np.sin(Y), 0 * X)), _shear_field(sp), atol=1e-12)


def test_implicit_step_matches_root_finding_oracle():
    sp = FourierDivFree2D(2)
    rng = np.random.default_rng(0)
    u_prev = 0.5 * rng.standard_normal(sp.dim)
    g = 0.1 * rng.standard_normal(sp.dim)
    tau, mu, xi = 0.1, 0.05, 0.3
    problem = NSProblem2D(sp, mu, u_prev, stepping="implicit", newton=NewtonSettings(tol=1e-13))
    u, _ = ns_step(problem, u_prev, np.zeros(sp.dim), g, xi, tau)
    basis = np.eye(sp.dim)
    K = np.diag(sp.knorm_sq)

    def F(v, s):
        conv = np.array([trilinear_skew(sp, v, v, e) for e in basis])
        return v + s * tau * (mu * K @ v + conv) - u_prev - g * xi

    # continuation in the step size from the trivial solution at s = 0
    v = u_prev + g * xi
    for s in np.linspace(0, 1, 11)[1:]:
        v = optimize.root(F, v, args=(s,), tol=1e-15).x
    assert np.allclose(u, v, atol=1e-11)


@pytest.fixture(scope="module")
def ns_records():
    sp = FourierDivFree2D(4)
    u0 = sp.load(lambda X, Y: (np.sin(Y) + 0.3 * np.cos(2 * Y), np.sin(X)))
    grid = TimeGrid(1.0, 16)
    out = {}
    for stepping in ("semi", "implicit"):
        problem = NSProblem2D(sp, 0.05, u0, f=lambda t, X, Y: (0.1 * np.cos(Y), 0 * X),
                              gamma_fn=_multiplicative, C_growth=0.2, stepping=stepping)
        out[stepping] = (problem, run_path(problem, grid, gen_increments("gaussian", grid, 1, 0)))
    return out


def test_energy_identity(ns_records):
    _, semi = ns_records["semi"]
    problem, impl = ns_records["implicit"]
    assert np.max(np.abs(ns_energy_check(semi))) <= 1e-10
    assert np.max(np.abs(ns_energy_check(impl))) <= 10 * problem.newton.tol


def test_divergence_free_on_every_step(ns_records):
    for _, rec in ns_records.values():
        assert divergence_max(rec) <= 1e-12


def test_growth_envelope_slack_is_nonnegative(ns_records):
    problem, rec = ns_records["semi"]
    assert np.min(growth_envelope_check(problem, rec)) >= -1e-12


def test_envelope_violation_rejected_at_construction():
    sp = FourierDivFree2D(1)
    with pytest.raises(ValueError, match="growth envelope"):
        NSProblem2D(sp, 0.1, np.zeros(sp.dim), gamma_fn=_multiplicative, C_growth=0.1)
    with pytest.raises(ValueError):
        NSProblem2D(sp, 0.0, np.zeros(sp.dim))
    with pytest.raises(ValueError):
        NSProblem2D(sp, 0.1, np.zeros(sp.dim), stepping="explicit")


def test_noise_projection_of_a_state_independent_field():
    sp = FourierDivFree2D(2)
    problem = NSProblem2D(sp, 0.1, np.zeros(sp.dim), gamma_fn=lambda t, X, Y, U1, U2: (t * np.sin(Y), 0 * X),
                          C_growth=0.0, k_fn=lambda t, X, Y: np.ones_like(X))
    g = multiplicative_noise_eval(problem, np.zeros(sp.dim), 0.2, 0.6)
    # time average of t over (0.2, 0.6) is 0.4
    assert np.allclose(g, 0.4 * _shear_field(sp), atol=1e-12)


def test_skew_symmetry_and_non_skew_negative_control():
    sp = FourierDivFree2D(3)
    rng = np.random.default_rng(3)
    u, w = rng.standard_normal((2, sp.dim))
    assert abs(skew_symmetry_check(sp, u, w)) <= 1e-12
    # a solenoidal advecting field gives zero even in the plain form
    assert abs(convection_defect(sp, w, u)) <= 1e-11
    # a compressible advecting field does not
    assert abs(convection_defect(sp, w, lambda X, Y: (np.sin(X), np.cos(Y)))) > 1e-2


def test_rotation_equivariance():
    sp = FourierDivFree2D(3)
    u = np.random.default_rng(4).standard_normal(sp.dim)
    for stepping in Stepping:
        problem = NSProblem2D(sp, 0.05, u, stepping=stepping)
        assert rotation_equivariance_gap(problem, u, 0.05) <= 1e-12


def test_stepping_gap_shrinks_with_the_step():
    sp = FourierDivFree2D(2)
    u0 = np.random.default_rng(5).standard_normal(sp.dim)
    problem = NSProblem2D(sp, 0.05, u0)
    gaps = []
    for N in (8, 32):
        grid = TimeGrid(0.5, N)
        gaps.append(stepping_gap(problem, grid, gen_increments("gaussian", grid, 0, 0)))
    assert gaps[1] < gaps[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31))
def test_skew_symmetry_property(M, seed):
    sp = FourierDivFree2D(M)
    rng = np.random.default_rng(seed)
    u, w = rng.standard_normal((2, sp.dim))
    assert abs(skew_symmetry_check(sp, u, w)) <= 1e-12 * max(1.0, np.linalg.norm(u) * np.linalg.norm(w) ** 2)
