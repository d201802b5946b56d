import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from spdelab.galerkin import (
    FourierDivFree2D,
    P1Dirichlet1D,
    P1Neumann1D_vec3,
    SpectralSine1D,
    assemble_mass,
    assemble_stiffness,
    l2_project,
    norms,
    q_gradient_norm,
    q_laplacian_apply,
    time_average_data,
    trilinear_skew,
)
from spdelab.noise import TimeGrid


def _hat(nodes, i):
    def phi(x):
        return np.interp(x, nodes, np.eye(len(nodes))[i])

    return phi


def test_p1_matrices_against_adaptive_quadrature():
    sp = P1Dirichlet1D(5)
    nodes = sp.nodes
    M = np.zeros((sp.dim, sp.dim))
    K = np.zeros((sp.dim, sp.dim))
    h = sp.h
    for a in range(sp.dim):
        for b in range(sp.dim):
            pa, pb = _hat(nodes, a + 1), _hat(nodes, b + 1)
            M[a, b] = integrate.quad(lambda x: pa(x) * pb(x), 0, 1, points=nodes[1:-1])[0]
            da = lambda x: (pa(x + 1e-7) - pa(x - 1e-7)) / 2e-7  # noqa: E731
            db = lambda x: (pb(x + 1e-7) - pb(x - 1e-7)) / 2e-7  # noqa: E731
            # integrate the slopes cell by cell at midpoints (slopes are constant)
            mids = nodes[:-1] + h / 2
            K[a, b] = h * np.sum(da(mids) * db(mids))
    assert np.allclose(assemble_mass(sp), M, atol=1e-12)
    assert np.allclose(assemble_stiffness(sp), K, atol=1e-6)


def test_assembled_matrices_are_cached_and_read_only():
    sp = P1Dirichlet1D(4)
    assert sp.mass is sp.mass
    with pytest.raises(ValueError):
        sp.mass[0, 0] = 1.0


def test_spectral_load_matches_closed_form():
    sp = SpectralSine1D(12)
    b = sp.load(lambda x: x * (1 - x))
    k = np.arange(1, 13)
    exact = np.sqrt(2.0) * 2.0 * (1 - (-1.0) ** k) / (k * np.pi) ** 3
    assert np.allclose(b, exact, atol=1e-14)
    assert np.array_equal(sp.stiffness, np.diag((k * np.pi) ** 2))


def test_spectral_basis_is_orthonormal_by_quadrature():
    sp = SpectralSine1D(6)
    G = np.array(
        [[integrate.quad(lambda x: sp.basis(x)[i] * sp.basis(x)[j], 0, 1, limit=200)[0] for j in range(6)]
         for i in range(6)]
    )
    assert np.allclose(G, np.eye(6), atol=1e-12)


def test_l2_project_reproduces_elements_of_the_space():
    sp = P1Dirichlet1D(7)
    c = np.random.default_rng(0).standard_normal(sp.dim)
    assert np.allclose(l2_project(sp, lambda x: sp.evaluate(c, x)), c, atol=1e-13)
    with pytest.raises(ValueError):
        l2_project(sp, lambda x: np.full_like(x, np.nan))
    with pytest.raises(ValueError):
        l2_project(sp, lambda x: x["bad"])


def test_norms_and_exact_dual_norm():
    sp = P1Dirichlet1D(6)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(sp.dim)
    n = norms(sp, u)
    M, K = sp.mass, sp.stiffness
    assert n.h_norm == pytest.approx(np.sqrt(u @ M @ u))
    assert n.u_norm == pytest.approx(np.sqrt(u @ (K + M) @ u))
    r = M @ u
    assert n.dual_norm == pytest.approx(np.sqrt(r @ np.linalg.solve(K + M, r)))
    # the sup is attained at v = (K+M)^{-1} r and is never exceeded
    v = rng.standard_normal((2000, sp.dim))
    ratios = (v @ r) / np.sqrt(np.einsum("pi,ij,pj->p", v, K + M, v))
    assert np.max(ratios) <= n.dual_norm * (1 + 1e-12)
    with pytest.raises(ValueError):
        norms(sp, np.zeros(sp.dim + 1))


def test_time_average_data_is_exact_for_polynomials():
    g = TimeGrid(1.0, 5)
    avg = time_average_data(lambda t: np.array([t**3, 1.0]), g)
    a, b = g.times[:-1], g.times[1:]
    assert np.allclose(avg[:, 0], (b**4 - a**4) / 4 / g.tau, atol=1e-15)
    assert np.allclose(avg[:, 1], 1.0)


def test_vec3_space_layout():
    sp = P1Neumann1D_vec3(4)
    assert sp.dim == 15
    c = sp.interpolate(lambda x: np.stack([x, 2 * x, 3 * x], axis=-1))
    assert np.allclose(sp.nodal(c)[:, 1], 2 * sp.nodes)
    assert np.allclose(sp.evaluate(c, 0.3), [0.3, 0.6, 0.9])
    # constant vectors lie in the kernel of the Neumann stiffness
    assert np.allclose(sp.stiffness @ np.tile([1.0, -2.0, 0.5], 5), 0.0)


def test_q_laplacian_coercivity_identity_and_gradient():
    sp = P1Dirichlet1D(9)
    rng = np.random.default_rng(2)
    for q in (1.5, 2.0, 3.0, 4.0):
        u = rng.standard_normal(sp.dim)
        Au = q_laplacian_apply(sp, u, q)
        assert Au @ u == pytest.approx(q_gradient_norm(sp, u, q), rel=1e-12)
        # A_q is the gradient of (1/q)|u'|_q^q
        eps = 1e-6
        fd = np.array([
            (q_gradient_norm(sp, u + eps * e, q) - q_gradient_norm(sp, u - eps * e, q)) / (2 * eps * q)
            for e in np.eye(sp.dim)
        ])
        assert np.allclose(Au, fd, rtol=1e-6, atol=1e-8)
    assert np.allclose(q_laplacian_apply(sp, u, 2.0), sp.stiffness @ u)
    with pytest.raises(ValueError):
        q_laplacian_apply(sp, u, 1.0)


# --- divergence-free Fourier space --------------------------------------------


@pytest.fixture(scope="module")
def fourier():
    return FourierDivFree2D(3)


def _dense_grid_gram(sp, n):
    x = 2 * np.pi * np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    Ex, Ey, d = sp.basis_at(X, Y, derivs=True)
    area = (2 * np.pi / n) ** 2
    mass = area * (Ex.T @ Ex + Ey.T @ Ey)
    stiff = area * sum(d[k].T @ d[k] for k in d)
    return mass, stiff


def test_fourier_mass_and_stiffness_by_dense_quadrature(fourier):
    mass, stiff = _dense_grid_gram(fourier, 41)
    assert np.allclose(mass, fourier.mass, atol=1e-12)
    assert np.allclose(stiff, fourier.stiffness, atol=1e-11)


def test_symmetric_gradient_form_equals_stiffness(fourier):
    assert np.allclose(fourier.stiffness_symgrad(), fourier.stiffness, atol=1e-11)


def test_fourier_elements_are_divergence_free(fourier):
    c = np.random.default_rng(0).standard_normal(fourier.dim)
    X, Y = fourier.grid_points(17)
    assert np.max(np.abs(fourier.divergence(c, X, Y))) < 1e-12


def test_quad_n_below_dealiasing_rule_rejected():
    with pytest.raises(ValueError):
        FourierDivFree2D(3, quad_n=9)


def test_trilinear_form_against_dense_grid(fourier):
    rng = np.random.default_rng(4)
    u, w, v = rng.standard_normal((3, fourier.dim))
    n = 61
    x = 2 * np.pi * np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    Ex, Ey, d = fourier.basis_at(X, Y, derivs=True)
    ux, uy = Ex @ u, Ey @ u
    wx, wy, vx, vy = Ex @ w, Ey @ w, Ex @ v, Ey @ v
    adv_w = (ux * (d["xx"] @ w) + uy * (d["yx"] @ w), ux * (d["xy"] @ w) + uy * (d["yy"] @ w))
    adv_v = (ux * (d["xx"] @ v) + uy * (d["yx"] @ v), ux * (d["xy"] @ v) + uy * (d["yy"] @ v))
    area = (2 * np.pi / n) ** 2
    oracle = 0.5 * area * (np.sum(adv_w[0] * vx + adv_w[1] * vy) - np.sum(adv_v[0] * wx + adv_v[1] * wy))
    assert trilinear_skew(fourier, u, w, v) == pytest.approx(oracle, abs=1e-11)


def test_skew_convection_vector_and_jacobian(fourier):
    rng = np.random.default_rng(6)
    u, w = rng.standard_normal((2, fourier.dim))
    vec = fourier.skew_convection(u, w)
    assert np.allclose(vec, fourier.skew_convection_matrix(u) @ w, atol=1e-12)
    assert vec[0] == pytest.approx(trilinear_skew(fourier, u, w, np.eye(fourier.dim)[0]), abs=1e-12)
    J = fourier.skew_convection_jacobian(u)
    eps = 1e-6
    fd = np.stack([
        (fourier.skew_convection(u + eps * e) - fourier.skew_convection(u - eps * e)) / (2 * eps)
        for e in np.eye(fourier.dim)
    ], axis=1)
    assert np.allclose(J, fd, atol=1e-7)


def test_rotation_preserves_norm_and_is_order_four(fourier):
    c = np.random.default_rng(8).standard_normal(fourier.dim)
    r = fourier.rotate90(c)
    assert np.linalg.norm(r) == pytest.approx(np.linalg.norm(c), rel=1e-12)
    r4 = fourier.rotate90(fourier.rotate90(fourier.rotate90(r)))
    assert np.allclose(r4, c, atol=1e-12)


def test_trilinear_rejects_foreign_vectors(fourier):
    with pytest.raises(ValueError):
        trilinear_skew(fourier, np.zeros(3), np.zeros(fourier.dim), np.zeros(fourier.dim))
    with pytest.raises(TypeError):
        trilinear_skew(SpectralSine1D(2), np.zeros(2), np.zeros(2), np.zeros(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31))
def test_skew_form_vanishes_on_the_diagonal(M, seed):
    sp = FourierDivFree2D(M)
    rng = np.random.default_rng(seed)
    u, w = rng.standard_normal((2, sp.dim)) * rng.uniform(0.1, 10.0)
    scale = np.linalg.norm(u) * np.linalg.norm(w) ** 2 * M
    assert abs(trilinear_skew(sp, u, w, w)) <= 1e-13 * max(scale, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.floats(1.1, 5.0), st.integers(0, 2**31))
def test_q_laplacian_is_monotone(n, q, seed):
    sp = P1Dirichlet1D(n)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, sp.dim))
    gap = (q_laplacian_apply(sp, v, q) - q_laplacian_apply(sp, u, q)) @ (v - u)
    assert gap >= -1e-12
