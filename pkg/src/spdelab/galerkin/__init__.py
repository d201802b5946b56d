"""Discrete trial spaces, assembly, projections and norms."""

from .base import (
    GalerkinSpace,
    Norms,
    assemble_mass,
    assemble_stiffness,
    l2_project,
    norms,
    time_average_data,
)
from .p1 import P1Dirichlet1D, P1Neumann1D_vec3, q_gradient_norm, q_laplacian_apply
from .spectral import FourierDivFree2D, SpectralSine1D, trilinear_skew

__all__ = [
    "GalerkinSpace",
    "Norms",
    "P1Dirichlet1D",
    "P1Neumann1D_vec3",
    "SpectralSine1D",
    "FourierDivFree2D",
    "assemble_mass",
    "assemble_stiffness",
    "l2_project",
    "norms",
    "q_laplacian_apply",
    "q_gradient_norm",
    "trilinear_skew",
    "time_average_data",
]
