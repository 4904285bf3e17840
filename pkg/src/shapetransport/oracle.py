"""Brute-force parallel transport through Christoffel symbols.

Ground truth for the fanning scheme at small dimension: the landmark metric
is the inverse of the kernel Gram operator, its Christoffel symbols are
assembled from central finite differences of the metric, and the transport
equation dX^i/dt + Gamma^i_kl X^l dgamma^k/dt = 0 is integrated with the
classical order-4 scheme along a finely re-shot geodesic.  Everything is
O((nd)^3) per node and capped at nd <= 12; this module is deliberately the
slow, independent route.
"""

from __future__ import annotations

import numpy as np

from .kernels import KernelConfig, apply_kernel, as_points, solve_kernel
from .shooting import GeodesicState, IntegratorConfig, shoot

__all__ = [
    "ND_CAP",
    "metric_tensor",
    "christoffel",
    "momenta_to_tangent",
    "tangent_to_momenta",
    "transport_ode",
    "oracle_transport",
]

ND_CAP = 12


def _check_cap(n, d):
    if n * d > ND_CAP:
        raise ValueError(f"oracle is capped at n*d <= {ND_CAP}, got n*d = {n * d}")


def _metric_batch(configs, kcfg):
    """Metric tensors for a (B, n, d) batch of control-point configurations."""
    B, n, d = configs.shape
    diff = configs[:, :, None, :] - configs[:, None, :, :]
    sq = np.einsum("bijk,bijk->bij", diff, diff)
    K = np.exp(-sq / (2.0 * kcfg.sigma**2))
    Kinv = np.linalg.inv(K)
    g = np.einsum("bij,xy->bixjy", Kinv, np.eye(d)).reshape(B, n * d, n * d)
    return g


def metric_tensor(c, kcfg: KernelConfig) -> np.ndarray:
    """Landmark metric g(c): the (nd, nd) inverse of the kernel Gram operator.

    Coordinates are flattened point-major: index i*d + a is coordinate a of
    point i.  Raises when the kernel matrix is numerically singular.
    """
    c = as_points(c, "control points")
    g = _metric_batch(c[None], kcfg)[0]
    if not np.isfinite(g).all():
        raise ValueError("kernel matrix is numerically singular at these control points")
    return g


def christoffel(c, kcfg: KernelConfig, fd_step: float | None = None) -> np.ndarray:
    """Levi-Civita Christoffel symbols Gamma[i, k, l] of the landmark metric.

    Gamma^i_kl = 1/2 g^im (d_k g_ml + d_l g_mk - d_m g_kl), with the metric
    derivatives taken by central finite differences of step fd_step on each of
    the nd flattened coordinates.  Symmetric in (k, l) by construction.
    """
    c = as_points(c, "control points")
    n, d = c.shape
    _check_cap(n, d)
    nd = n * d
    if fd_step is None:
        fd_step = 1e-5 * max(1.0, float(np.max(np.abs(c))))
    if not fd_step > 0:
        raise ValueError(f"fd_step must be positive, got {fd_step!r}")
    x = c.reshape(nd)
    eye = np.eye(nd)
    perturbed = np.concatenate([x[None] + fd_step * eye, x[None] - fd_step * eye])
    g_pm = _metric_batch(perturbed.reshape(2 * nd, n, d), kcfg)
    if not np.isfinite(g_pm).all():
        raise ValueError("metric is singular at a finite-difference perturbation")
    dg = (g_pm[:nd] - g_pm[nd:]) / (2.0 * fd_step)  # dg[k, m, l] = d_k g_ml
    ginv = np.linalg.inv(metric_tensor(c, kcfg))
    # T[k, l, m] = d_k g_ml + d_l g_mk - d_m g_kl
    T = np.transpose(dg, (0, 2, 1)) + np.transpose(dg, (2, 0, 1)) - np.transpose(dg, (1, 2, 0))
    return 0.5 * np.einsum("im,klm->ikl", ginv, T)


def momenta_to_tangent(c, omega, kcfg: KernelConfig) -> np.ndarray:
    """Velocity representation v = K_c omega of a momenta set."""
    return apply_kernel(c, omega, c, kcfg)


def tangent_to_momenta(c, w, kcfg: KernelConfig) -> np.ndarray:
    """Momenta representation omega = K_c^{-1} v of a tangent vector."""
    return solve_kernel(c, w, kcfg)


def _transport_matrix(c, alpha, kcfg, fd_step):
    """A(t) with dX/dt = A X along the geodesic, in flattened coordinates."""
    gamma = christoffel(c, kcfg, fd_step)
    v = momenta_to_tangent(c, alpha, kcfg).reshape(-1)
    return -np.einsum("ikl,k->il", gamma, v)


def transport_ode(
    s0: GeodesicState,
    w0,
    fine_steps: int,
    kcfg: KernelConfig,
    fd_step: float | None = None,
) -> np.ndarray:
    """Parallel-transport the tangent vector w0 to t = 1 along the geodesic of s0.

    The geodesic is re-shot with order-4 steps at twice the transport
    resolution so that Runge-Kutta stage times land on path nodes; the
    transport equation is then integrated with fine_steps classical order-4
    steps.  Requires fine_steps >= 1000 and nd <= 12.
    """
    w1, _ = oracle_path_transport(s0, w0, fine_steps, kcfg, fd_step)
    return w1


def oracle_path_transport(
    s0: GeodesicState,
    w0,
    fine_steps: int,
    kcfg: KernelConfig,
    fd_step: float | None = None,
):
    """transport_ode plus the fine-geodesic endpoint state it transported to."""
    w0 = as_points(w0, "tangent vector")
    n, d = s0.c.shape
    _check_cap(n, d)
    if w0.shape != s0.c.shape:
        raise ValueError(f"tangent shape {w0.shape} != control points shape {s0.c.shape}")
    if fine_steps < 1000:
        raise ValueError(f"fine_steps must be >= 1000, got {fine_steps}")
    path = shoot(s0, IntegratorConfig(steps=2 * fine_steps, order=4), kcfg)
    H = 1.0 / fine_steps
    X = w0.reshape(-1).copy()
    A_node = _transport_matrix(path.states[0].c, path.states[0].alpha, kcfg, fd_step)
    for k in range(fine_steps):
        mid = path.states[2 * k + 1]
        end = path.states[2 * k + 2]
        A_mid = _transport_matrix(mid.c, mid.alpha, kcfg, fd_step)
        A_end = _transport_matrix(end.c, end.alpha, kcfg, fd_step)
        k1 = A_node @ X
        k2 = A_mid @ (X + 0.5 * H * k1)
        k3 = A_mid @ (X + 0.5 * H * k2)
        k4 = A_end @ (X + H * k3)
        X = X + (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        A_node = A_end
    return X.reshape(n, d), path.final


def oracle_transport(
    s0: GeodesicState,
    omega0,
    fine_steps: int,
    kcfg: KernelConfig,
):
    """Transport a momenta set through the Christoffel ODE.

    Converts omega0 to its velocity representation, integrates the transport
    equation, and converts back at the fine-geodesic endpoint.  Returns
    (omega at t=1, endpoint GeodesicState).
    """
    omega0 = as_points(omega0, "omega0")
    w0 = momenta_to_tangent(s0.c, omega0, kcfg)
    w1, final = oracle_path_transport(s0, w0, fine_steps, kcfg)
    return tangent_to_momenta(final.c, w1, kcfg), final
