"""Piecewise-linear finite elements on a uniform 1D mesh."""

from __future__ import annotations

from functools import cached_property
from typing import Callable

import numpy as np

from .base import GalerkinSpace, gauss_cell

# 5-point Gauss per cell: exact for degree 9, enough for the quartic penalty terms
QUAD_ORDER = 5


def _p1_matrices(n_cells: int, h: float):
    nn = n_cells + 1
    m = np.zeros((nn, nn))
    k = np.zeros((nn, nn))
    me = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
    ke = (1.0 / h) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    for c in range(n_cells):
        sl = slice(c, c + 2)
        m[sl, sl] += me
        k[sl, sl] += ke
    return m, k


class _P1Mesh(GalerkinSpace):
    def __init__(self, n_cells: int, a: float = 0.0, b: float = 1.0):
        if int(n_cells) != n_cells or n_cells < 1:
            raise ValueError(f"need a positive number of cells, got {n_cells}")
        if not b > a:
            raise ValueError("interval must satisfy a < b")
        self.n_cells = int(n_cells)
        self.a, self.b = float(a), float(b)
        self.h = (self.b - self.a) / self.n_cells
        self.nodes = self.a + self.h * np.arange(self.n_cells + 1)
        self.nodes[-1] = self.b
        s, w = gauss_cell(QUAD_ORDER)
        self.qp_ref = s
        self.qp_weights = w * self.h
        # basis values at reference quadrature points: columns (left, right)
        self.qp_basis = np.stack([1.0 - s, s], axis=1)
        self.qp_x = self.nodes[:-1, None] + self.h * s[None, :]

    @property
    def length(self) -> float:
        return self.b - self.a

    def _cell_loads(self, vals: np.ndarray) -> np.ndarray:
        """Distribute per-quadrature-point integrands ``(cells, nq, ...)`` to nodes."""
        wv = vals * self.qp_weights.reshape((1, -1) + (1,) * (vals.ndim - 2))
        left = np.einsum("cq...,q->c...", wv, self.qp_basis[:, 0])
        right = np.einsum("cq...,q->c...", wv, self.qp_basis[:, 1])
        out = np.zeros((self.n_cells + 1,) + vals.shape[2:])
        out[:-1] += left
        out[1:] += right
        return out

    def qp_values(self, nodal: np.ndarray) -> np.ndarray:
        """Interpolant of nodal values at quadrature points, shape ``(cells, nq, ...)``."""
        nodal = np.asarray(nodal, dtype=float)
        shape = (1, -1) + (1,) * (nodal.ndim - 1)
        L = self.qp_basis[:, 0].reshape(shape)
        R = self.qp_basis[:, 1].reshape(shape)
        return nodal[:-1][:, None] * L + nodal[1:][:, None] * R

    def integrate(self, qp_vals: np.ndarray) -> float:
        """Quadrature of a scalar integrand given at quadrature points."""
        return float(np.sum(qp_vals * self.qp_weights[None, :]))


class P1Dirichlet1D(_P1Mesh):
    """Scalar P1 elements with homogeneous Dirichlet data; dofs are interior nodes."""

    variant = "P1Dirichlet1D"

    @property
    def dim(self) -> int:
        return self.n_cells - 1

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def _full(self):
        return _p1_matrices(self.n_cells, self.h)

    def _mass(self):
        return self._full()[0][1:-1, 1:-1].copy()

    def _stiffness(self):
        return self._full()[1][1:-1, 1:-1].copy()

    def nodal(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        pad = [(0, 0)] * (c.ndim - 1) + [(1, 1)]
        return np.pad(c, pad)

    @cached_property
    def grad(self) -> np.ndarray:
        """Cellwise derivative operator, shape ``(cells, dim)``."""
        d = np.zeros((self.n_cells, self.n_cells + 1))
        idx = np.arange(self.n_cells)
        d[idx, idx] = -1.0 / self.h
        d[idx, idx + 1] = 1.0 / self.h
        d = d[:, 1:-1].copy()
        d.setflags(write=False)
        return d

    def load(self, target: Callable) -> np.ndarray:
        vals = np.asarray(target(self.qp_x), dtype=float) * np.ones_like(self.qp_x)
        return self._cell_loads(vals)[1:-1]

    def evaluate(self, c: np.ndarray, x) -> np.ndarray:
        return np.interp(x, self.nodes, self.nodal(c))

    def interpolate(self, fn: Callable) -> np.ndarray:
        return np.asarray(fn(self.interior), dtype=float) * np.ones(self.dim)


class P1Neumann1D_vec3(_P1Mesh):
    """R^3-valued P1 elements with natural boundary conditions.

    Coefficients are node-major: ``c.reshape(nodes, 3)`` gives nodal vectors.
    """

    variant = "P1Neumann1D_vec3"

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def dim(self) -> int:
        return 3 * self.n_nodes

    @cached_property
    def scalar_mass(self) -> np.ndarray:
        return _p1_matrices(self.n_cells, self.h)[0]

    @cached_property
    def scalar_stiffness(self) -> np.ndarray:
        return _p1_matrices(self.n_cells, self.h)[1]

    def _mass(self):
        return np.kron(self.scalar_mass, np.eye(3))

    def _stiffness(self):
        return np.kron(self.scalar_stiffness, np.eye(3))

    def nodal(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c, dtype=float).reshape(self.n_nodes, 3)

    def flat(self, nodal: np.ndarray) -> np.ndarray:
        return np.asarray(nodal, dtype=float).reshape(-1)

    def cell_gradients(self, c: np.ndarray) -> np.ndarray:
        u = self.nodal(c)
        return (u[1:] - u[:-1]) / self.h

    def load(self, target: Callable) -> np.ndarray:
        vals = np.asarray(target(self.qp_x), dtype=float)
        if vals.shape != self.qp_x.shape + (3,):
            vals = np.broadcast_to(vals, self.qp_x.shape + (3,))
        return self._cell_loads(vals).reshape(-1)

    def interpolate(self, fn: Callable) -> np.ndarray:
        vals = np.asarray(fn(self.nodes), dtype=float)
        return np.broadcast_to(vals, (self.n_nodes, 3)).reshape(-1).copy()

    def evaluate(self, c: np.ndarray, x) -> np.ndarray:
        u = self.nodal(c)
        return np.stack([np.interp(x, self.nodes, u[:, i]) for i in range(3)], axis=-1)


def q_laplacian_apply(space: P1Dirichlet1D, u: np.ndarray, q: float) -> np.ndarray:
    """``(A_q(u), phi_i) = int |u'|^{q-2} u' phi_i'``; exact since ``u'`` is cellwise constant."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    if not isinstance(space, P1Dirichlet1D):
        raise TypeError("the q-Laplacian is assembled on P1Dirichlet1D only")
    s = space.grad @ np.asarray(u, dtype=float)
    flux = np.sign(s) * np.abs(s) ** (q - 1.0)
    return space.h * (space.grad.T @ flux)


def q_gradient_norm(space: P1Dirichlet1D, u: np.ndarray, q: float) -> float:
    """``|u'|_{L^q}^q``."""
    s = space.grad @ np.asarray(u, dtype=float)
    return float(space.h * np.sum(np.abs(s) ** q))
