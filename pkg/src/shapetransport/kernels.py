"""Gaussian kernel operations on control-point configurations.

Velocity fields are built by convolving a Gaussian kernel over n control
points in R^d, weighted by attached momenta.  Everything here works on plain
(n, d) float arrays; the n x n kernel matrix is the scalar block of the full
operator, applied identically to each coordinate (the nd x nd Kronecker
product with the identity is never materialized).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "KernelConfig",
    "KernelSolveError",
    "kernel_value",
    "kernel_matrix",
    "cross_kernel",
    "apply_kernel",
    "energy_gradient",
    "kernel_inner",
    "solve_kernel",
]

# Relative residual above which a kernel solve is considered unreliable
# (near-coincident control points make the Gram matrix numerically singular).
SOLVE_RESIDUAL_TOL = 1e-6

# Above this many scalars, pairwise distances switch from the exact broadcast
# form to the Gram-trick form to bound temporary memory.
_BROADCAST_BUDGET = 40_000_000


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel width, in the same length units as point coordinates."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"kernel width must be positive, got {self.sigma!r}")


class KernelSolveError(RuntimeError):
    """Kernel linear system is numerically singular or the solve is unreliable."""


def as_points(arr, name="points"):
    """Coerce to a non-empty (n, d) float array."""
    pts = np.asarray(arr, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty (n, d) array, got shape {np.shape(arr)}")
    return pts


def _check_pair(c, alpha, name="momenta"):
    c = as_points(c, "control points")
    alpha = as_points(alpha, name)
    if alpha.shape != c.shape:
        raise ValueError(
            f"{name} shape {alpha.shape} does not match control points {c.shape}"
        )
    return c, alpha


def kernel_value(x, y, cfg: KernelConfig) -> float:
    """k(x, y) = exp(-|x - y|^2 / (2 sigma^2)), symmetric, in (0, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sq = float(np.sum((x - y) ** 2))
    return float(np.exp(-sq / (2.0 * cfg.sigma**2)))


def cross_kernel(x, c, cfg: KernelConfig) -> np.ndarray:
    """Kernel matrix between query points x (m, d) and control points c (n, d)."""
    x = as_points(x, "query points")
    c = as_points(c, "control points")
    if x.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: query d={x.shape[1]}, control d={c.shape[1]}")
    if x.shape[0] * c.shape[0] * c.shape[1] <= _BROADCAST_BUDGET:
        diff = x[:, None, :] - c[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
    else:
        sq = (
            np.sum(x**2, axis=1)[:, None]
            + np.sum(c**2, axis=1)[None, :]
            - 2.0 * (x @ c.T)
        )
        np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * cfg.sigma**2))


def kernel_matrix(c, cfg: KernelConfig) -> np.ndarray:
    """Symmetric positive semi-definite Gram matrix K_ij = k(c_i, c_j), unit diagonal."""
    c = as_points(c, "control points")
    return cross_kernel(c, c, cfg)


def apply_kernel(c, alpha, query, cfg: KernelConfig) -> np.ndarray:
    """Velocities sum_i k(x, c_i) alpha_i at each query point x."""
    c, alpha = _check_pair(c, alpha)
    return cross_kernel(query, c, cfg) @ alpha


def energy_gradient(c, alpha, cfg: KernelConfig) -> np.ndarray:
    """Gradient of the kernel energy alpha^T K_c alpha with respect to c.

    Component at c_i is 2 sum_j (alpha_i . alpha_j) k(c_i, c_j) (c_j - c_i) / sigma^2.
    The components sum to zero (the energy is translation invariant).
    """
    c, alpha = _check_pair(c, alpha)
    K = kernel_matrix(c, cfg)
    M = (alpha @ alpha.T) * K
    return (-2.0 / cfg.sigma**2) * (M.sum(axis=1)[:, None] * c - M @ c)


def kernel_inner(c, u, v, cfg: KernelConfig) -> float:
    """Kernel inner product <u, v>_c = sum over coordinates of u^T K_c v."""
    c = as_points(c, "control points")
    u = as_points(u, "u")
    v = as_points(v, "v")
    return float(np.sum(u * (kernel_matrix(c, cfg) @ v)))


def solve_kernel(c, v, cfg: KernelConfig, ridge: float = 0.0) -> np.ndarray:
    """Solve (K_c + ridge I) omega = v per coordinate via Cholesky.

    Raises KernelSolveError when the factorization fails or the relative
    residual of the solve exceeds SOLVE_RESIDUAL_TOL, which signals
    near-coincident control points.
    """
    c, v = _check_pair(c, v, "velocities")
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge!r}")
    A = kernel_matrix(c, cfg)
    if ridge:
        A = A + ridge * np.eye(A.shape[0])
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
        omega = scipy.linalg.cho_solve(factor, v)
    except scipy.linalg.LinAlgError as exc:
        raise KernelSolveError(f"kernel matrix is not numerically positive definite: {exc}") from exc
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return np.zeros_like(v)
    residual = np.linalg.norm(A @ omega - v) / vnorm
    if residual > SOLVE_RESIDUAL_TOL:
        raise KernelSolveError(
            f"kernel solve residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL:.0e}; "
            "control points are likely near-coincident"
        )
    return omega
