"""Spectral trial spaces: Dirichlet sine modes on (0, 1) and divergence-free Fourier modes on the 2-torus."""

from __future__ import annotations

from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .base import GalerkinSpace

TWO_PI = 2.0 * np.pi


class SpectralSine1D(GalerkinSpace):
    """Orthonormal modes ``sqrt(2) sin(k pi x)``, k = 1..M, on (0, 1)."""

    variant = "SpectralSine1D"

    def __init__(self, M: int, quad_points: int | None = None):
        if int(M) != M or M < 1:
            raise ValueError(f"mode count must be a positive integer, got {M}")
        self.M = int(M)
        self.k = np.arange(1, self.M + 1)
        self.eigenvalues = (self.k * np.pi) ** 2
        nq = quad_points or max(64, 2 * self.M + 32)
        x, w = leggauss(nq)
        self.qp_x = 0.5 * (x + 1.0)
        self.qp_w = 0.5 * w

    @property
    def dim(self) -> int:
        return self.M

    def basis(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(x, self.k))

    def _mass(self):
        return np.eye(self.M)

    def _stiffness(self):
        return np.diag(self.eigenvalues)

    def load(self, target: Callable) -> np.ndarray:
        vals = np.asarray(target(self.qp_x), dtype=float) * np.ones_like(self.qp_x)
        return self.basis(self.qp_x).T @ (self.qp_w * vals)

    def evaluate(self, c: np.ndarray, x) -> np.ndarray:
        return self.basis(x) @ np.asarray(c, dtype=float)


class FourierDivFree2D(GalerkinSpace):
    """Real divergence-free trigonometric velocity fields on ``[0, 2 pi)^2``.

    For each wavevector ``k`` in a half-plane with ``max(|k1|, |k2|) <= M``
    the space holds ``cos(k.x) k_perp/|k|`` and ``sin(k.x) k_perp/|k|`` with
    ``k_perp = (-k2, k1)``, normalised to unit L^2 norm. Mean flows are
    excluded. Every element is exactly divergence-free, so the discretely
    divergence-free subspace is the whole space and no pressure appears.

    Quadratic and cubic products are evaluated on a uniform ``quad_n``
    grid with ``quad_n >= 3M + 1`` (the 3/2 dealiasing rule), which makes
    every triple product of space elements integrate exactly.
    """

    variant = "FourierDivFree2D"

    def __init__(self, M: int, quad_n: int | None = None, proj_n: int | None = None):
        if int(M) != M or M < 1:
            raise ValueError(f"mode cutoff must be a positive integer, got {M}")
        self.M = int(M)
        self.quad_n = int(quad_n or 3 * self.M + 1)
        if self.quad_n < 3 * self.M + 1:
            raise ValueError("quad_n must be at least 3M + 1 for exact triple products")
        self.proj_n = int(proj_n or 8 * self.M + 1)
        ks = []
        for k1 in range(0, self.M + 1):
            for k2 in range(-self.M, self.M + 1):
                if k1 > 0 or k2 > 0:
                    ks.append((k1, k2))
        self.wavevectors = np.array(ks, dtype=float)
        nk = len(ks)
        self.kvec = np.repeat(self.wavevectors, 2, axis=0)
        self.parity = np.tile([0, 1], nk)  # 0: cos, 1: sin
        kn = np.linalg.norm(self.kvec, axis=1)
        self.direction = np.stack([-self.kvec[:, 1], self.kvec[:, 0]], axis=1) / kn[:, None]
        self.knorm_sq = kn**2
        self._scale = 1.0 / (np.pi * np.sqrt(2.0))

    @property
    def dim(self) -> int:
        return len(self.kvec)

    @property
    def cell_area(self) -> float:
        return (TWO_PI / self.quad_n) ** 2

    def grid_points(self, n: int):
        x = TWO_PI * np.arange(n) / n
        X, Y = np.meshgrid(x, x, indexing="ij")
        return X.ravel(), Y.ravel()

    def basis_at(self, X, Y, derivs: bool = False):
        """Value matrices ``(Ex, Ey)`` of shape ``(npts, dim)``; with ``derivs`` also
        ``{"xx": d/dx of x-comp, "yx": d/dy of x-comp, "xy": d/dx of y-comp, "yy": ...}``."""
        X = np.asarray(X, dtype=float).ravel()
        Y = np.asarray(Y, dtype=float).ravel()
        phase = np.outer(X, self.kvec[:, 0]) + np.outer(Y, self.kvec[:, 1])
        c, s = np.cos(phase), np.sin(phase)
        is_sin = self.parity.astype(bool)
        trig = np.where(is_sin, s, c) * self._scale
        dtrig = np.where(is_sin, c, -s) * self._scale  # derivative of trig w.r.t. phase
        px, py = self.direction[:, 0], self.direction[:, 1]
        Ex, Ey = trig * px, trig * py
        if not derivs:
            return Ex, Ey
        k1, k2 = self.kvec[:, 0], self.kvec[:, 1]
        d = {
            "xx": dtrig * (k1 * px),
            "yx": dtrig * (k2 * px),
            "xy": dtrig * (k1 * py),
            "yy": dtrig * (k2 * py),
        }
        return Ex, Ey, d

    @cached_property
    def quad(self):
        X, Y = self.grid_points(self.quad_n)
        Ex, Ey, d = self.basis_at(X, Y, derivs=True)
        for arr in (Ex, Ey, *d.values()):
            arr.setflags(write=False)
        return {"X": X, "Y": Y, "Ex": Ex, "Ey": Ey, **d}

    @cached_property
    def proj(self):
        X, Y = self.grid_points(self.proj_n)
        Ex, Ey = self.basis_at(X, Y)
        return {"X": X, "Y": Y, "Ex": Ex, "Ey": Ey, "area": (TWO_PI / self.proj_n) ** 2}

    def _mass(self):
        return np.eye(self.dim)

    def _stiffness(self):
        return np.diag(self.knorm_sq)

    def stiffness_symgrad(self) -> np.ndarray:
        """``(2 D(phi_i), grad phi_j)`` assembled by exact grid quadrature."""
        q = self.quad
        A = self.cell_area
        xx, yx, xy, yy = q["xx"], q["yx"], q["xy"], q["yy"]
        # 2 D(u) : grad v = 2 u_x,x v_x,x + (u_x,y + u_y,x)(v_x,y + v_y,x) + 2 u_y,y v_y,y
        sym = yx + xy
        return A * (2.0 * xx.T @ xx + sym.T @ sym + 2.0 * yy.T @ yy)

    def load(self, target: Callable) -> np.ndarray:
        p = self.proj
        fx, fy = target(p["X"], p["Y"])
        fx = np.broadcast_to(np.asarray(fx, dtype=float), p["X"].shape)
        fy = np.broadcast_to(np.asarray(fy, dtype=float), p["X"].shape)
        return p["area"] * (p["Ex"].T @ fx + p["Ey"].T @ fy)

    def evaluate(self, c: np.ndarray, X, Y) -> tuple[np.ndarray, np.ndarray]:
        Ex, Ey = self.basis_at(X, Y)
        return Ex @ c, Ey @ c

    def divergence(self, c: np.ndarray, X, Y) -> np.ndarray:
        _, _, d = self.basis_at(X, Y, derivs=True)
        return d["xx"] @ c + d["yy"] @ c

    def quad_fields(self, c: np.ndarray) -> dict:
        q = self.quad
        return {key: q[key] @ c for key in ("Ex", "Ey", "xx", "yx", "xy", "yy")}

    def convection_form_matrix(self, u: np.ndarray) -> np.ndarray:
        """``C[j, i] = ((u . grad) phi_i, phi_j)`` by exact grid quadrature."""
        q = self.quad
        f = self.quad_fields(u)
        ux, uy = f["Ex"], f["Ey"]
        adv_x = ux[:, None] * q["xx"] + uy[:, None] * q["yx"]
        adv_y = ux[:, None] * q["xy"] + uy[:, None] * q["yy"]
        return self.cell_area * (q["Ex"].T @ adv_x + q["Ey"].T @ adv_y)

    def skew_convection_matrix(self, u: np.ndarray) -> np.ndarray:
        """Matrix of ``w -> b(u, w, .)``; skew-symmetric by construction."""
        C = self.convection_form_matrix(u)
        return 0.5 * (C - C.T)

    def skew_convection(self, u: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
        """Vector ``b(u, w, phi_j)`` (``w`` defaults to ``u``)."""
        w = u if w is None else w
        q = self.quad
        fu, fw = self.quad_fields(u), self.quad_fields(w)
        ux, uy = fu["Ex"], fu["Ey"]
        wx, wy = fw["Ex"], fw["Ey"]
        adv_wx = ux * fw["xx"] + uy * fw["yx"]
        adv_wy = ux * fw["xy"] + uy * fw["yy"]
        t1 = q["Ex"].T @ adv_wx + q["Ey"].T @ adv_wy
        t2 = q["xx"].T @ (ux * wx) + q["yx"].T @ (uy * wx) + q["xy"].T @ (ux * wy) + q["yy"].T @ (uy * wy)
        return 0.5 * self.cell_area * (t1 - t2)

    def skew_convection_jacobian(self, u: np.ndarray) -> np.ndarray:
        """Jacobian of ``u -> b(u, u, .)``."""
        q = self.quad
        fu = self.quad_fields(u)
        ux, uy = fu["Ex"], fu["Ey"]
        wrt_w = self.skew_convection_matrix(u)
        Ex, Ey = q["Ex"], q["Ey"]
        # derivative through the advecting field
        t1 = Ex.T @ (fu["xx"][:, None] * Ex + fu["yx"][:, None] * Ey) + Ey.T @ (
            fu["xy"][:, None] * Ex + fu["yy"][:, None] * Ey
        )
        t2 = (q["xx"].T * ux + q["xy"].T * uy) @ Ex + (q["yx"].T * ux + q["yy"].T * uy) @ Ey
        wrt_u = 0.5 * self.cell_area * (t1 - t2)
        return wrt_w + wrt_u

    def rotate90(self, c: np.ndarray) -> np.ndarray:
        """Coefficients of ``R u(R^T x)`` with ``R`` the rotation by +90 degrees."""
        p = self.proj
        X, Y = p["X"], p["Y"]
        ux, uy = self.evaluate(c, Y, -X)
        return p["area"] * (p["Ex"].T @ (-uy) + p["Ey"].T @ ux)


def trilinear_skew(space: FourierDivFree2D, u: np.ndarray, w: np.ndarray, v: np.ndarray) -> float:
    """``(1/2)((u.grad)w, v) - (1/2)(w, (u.grad)v)``, exact for trigonometric polynomials."""
    if not isinstance(space, FourierDivFree2D):
        raise TypeError("trilinear_skew requires a FourierDivFree2D space")
    for name, arr in (("u", u), ("w", w), ("v", v)):
        if np.shape(arr) != (space.dim,):
            raise ValueError(f"{name} does not belong to the space (dim {space.dim})")
    fu, fw, fv = space.quad_fields(u), space.quad_fields(w), space.quad_fields(v)
    ux, uy = fu["Ex"], fu["Ey"]
    adv_w = (ux * fw["xx"] + uy * fw["yx"], ux * fw["xy"] + uy * fw["yy"])
    adv_v = (ux * fv["xx"] + uy * fv["yx"], ux * fv["xy"] + uy * fv["yy"])
    first = adv_w[0] @ fv["Ex"] + adv_w[1] @ fv["Ey"]
    second = adv_v[0] @ fw["Ex"] + adv_v[1] @ fw["Ey"]
    return float(0.5 * space.cell_area * (first - second))
