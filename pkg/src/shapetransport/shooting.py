"""Hamiltonian geodesic shooting on the control-point manifold.

The geodesic flow of the kernel metric is the Hamiltonian system

    dc/dt     = K_c alpha
    dalpha/dt = -1/2 grad_c (alpha^T K_c alpha)

integrated over [0, 1] with an explicit Runge-Kutta scheme (order 2 is the
midpoint method, order 4 the classical scheme).  Passive shape points are
carried by the same velocity field, integrated jointly with the control
points so that intermediate Runge-Kutta stages stay consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelConfig, as_points, cross_kernel, kernel_matrix

__all__ = [
    "GeodesicState",
    "IntegratorConfig",
    "GeodesicPath",
    "BlowupError",
    "hamiltonian_rhs",
    "energy",
    "step",
    "shoot",
    "flow_shape",
]


class BlowupError(RuntimeError):
    """A step produced non-finite coordinates (step size too large)."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class GeodesicState:
    """Control points c and momenta alpha, both (n, d)."""

    c: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        c = as_points(self.c, "control points")
        alpha = as_points(self.alpha, "momenta")
        if alpha.shape != c.shape:
            raise ValueError(f"momenta shape {alpha.shape} != control points shape {c.shape}")
        if not (np.isfinite(c).all() and np.isfinite(alpha).all()):
            raise ValueError("state coordinates must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class IntegratorConfig:
    steps: int
    order: int = 2

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.order not in (2, 4):
            raise ValueError(f"order must be 2 or 4, got {self.order}")


@dataclass(frozen=True)
class GeodesicPath:
    """Discretized geodesic: N+1 states at times k/N, step h = 1/N."""

    states: tuple
    step: float
    kernel: KernelConfig
    order: int

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.step

    @property
    def initial(self) -> GeodesicState:
        return self.states[0]

    @property
    def final(self) -> GeodesicState:
        return self.states[-1]


def _pair_rhs(c, alpha, cfg):
    K = cross_kernel(c, c, cfg)
    M = (alpha @ alpha.T) * K
    dc = K @ alpha
    dalpha = (1.0 / cfg.sigma**2) * (M.sum(axis=1)[:, None] * c - M @ c)
    return dc, dalpha


def hamiltonian_rhs(state: GeodesicState, cfg: KernelConfig):
    """Time derivative (dc/dt, dalpha/dt) of the geodesic equations."""
    return _pair_rhs(state.c, state.alpha, cfg)


def energy(state: GeodesicState, cfg: KernelConfig) -> float:
    """Kinetic energy alpha^T K_c alpha, conserved along exact geodesics."""
    K = kernel_matrix(state.c, cfg)
    return float(np.sum(state.alpha * (K @ state.alpha)))


def _step_arrays(c, alpha, h, order, cfg):
    if order == 2:
        dc1, da1 = _pair_rhs(c, alpha, cfg)
        dc2, da2 = _pair_rhs(c + 0.5 * h * dc1, alpha + 0.5 * h * da1, cfg)
        return c + h * dc2, alpha + h * da2
    if order == 4:
        dc1, da1 = _pair_rhs(c, alpha, cfg)
        dc2, da2 = _pair_rhs(c + 0.5 * h * dc1, alpha + 0.5 * h * da1, cfg)
        dc3, da3 = _pair_rhs(c + 0.5 * h * dc2, alpha + 0.5 * h * da2, cfg)
        dc4, da4 = _pair_rhs(c + h * dc3, alpha + h * da3, cfg)
        c1 = c + (h / 6.0) * (dc1 + 2.0 * dc2 + 2.0 * dc3 + dc4)
        a1 = alpha + (h / 6.0) * (da1 + 2.0 * da2 + 2.0 * da3 + da4)
        return c1, a1
    raise ValueError(f"order must be 2 or 4, got {order}")


def step(state: GeodesicState, h: float, order: int, cfg: KernelConfig) -> GeodesicState:
    """One explicit Runge-Kutta step of the geodesic equations."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    with np.errstate(over="ignore", invalid="ignore"):
        c1, a1 = _step_arrays(state.c, state.alpha, h, order, cfg)
    if not (np.isfinite(c1).all() and np.isfinite(a1).all()):
        raise BlowupError(f"non-finite state after step of size {h}")
    return GeodesicState(c1, a1)


def shoot(s0: GeodesicState, icfg: IntegratorConfig, cfg: KernelConfig) -> GeodesicPath:
    """Integrate the geodesic over [0, 1]; the Riemannian exponential of (c, alpha)."""
    h = 1.0 / icfg.steps
    states = [s0]
    for k in range(icfg.steps):
        try:
            states.append(step(states[-1], h, icfg.order, cfg))
        except BlowupError as exc:
            raise BlowupError(f"geodesic blow-up at step {k}: {exc}", step_index=k) from exc
    return GeodesicPath(states=tuple(states), step=h, kernel=cfg, order=icfg.order)


def _joint_rhs(c, alpha, y, cfg):
    """Velocity of the combined (control points, momenta, passive points) system."""
    dc, dalpha = _pair_rhs(c, alpha, cfg)
    dy = cross_kernel(y, c, cfg) @ alpha
    return dc, dalpha, dy


def _joint_step_arrays(c, a, y, h, order, cfg):
    if order == 2:
        dc1, da1, dy1 = _joint_rhs(c, a, y, cfg)
        dc2, da2, dy2 = _joint_rhs(c + 0.5 * h * dc1, a + 0.5 * h * da1, y + 0.5 * h * dy1, cfg)
        return c + h * dc2, a + h * da2, y + h * dy2
    dc1, da1, dy1 = _joint_rhs(c, a, y, cfg)
    dc2, da2, dy2 = _joint_rhs(c + 0.5 * h * dc1, a + 0.5 * h * da1, y + 0.5 * h * dy1, cfg)
    dc3, da3, dy3 = _joint_rhs(c + 0.5 * h * dc2, a + 0.5 * h * da2, y + 0.5 * h * dy2, cfg)
    dc4, da4, dy4 = _joint_rhs(c + h * dc3, a + h * da3, y + h * dy3, cfg)
    c1 = c + (h / 6.0) * (dc1 + 2.0 * dc2 + 2.0 * dc3 + dc4)
    a1 = a + (h / 6.0) * (da1 + 2.0 * da2 + 2.0 * da3 + da4)
    y1 = y + (h / 6.0) * (dy1 + 2.0 * dy2 + 2.0 * dy3 + dy4)
    return c1, a1, y1


def flow_shape(path: GeodesicPath, shape) -> np.ndarray:
    """Carry passive shape points along the flow of a shot geodesic.

    Integrates dy/dt = sum_i k(y, c_i(t)) alpha_i(t) jointly with the
    control-point system, with the same step count and order as the path.
    Returns an (N+1, m, d) array of shape positions at each time node.
    """
    y = as_points(shape, "shape points")
    if not np.isfinite(y).all():
        raise ValueError("shape points must be finite")
    if path.order not in (2, 4):
        raise ValueError(f"path carries unsupported integrator order {path.order}")
    cfg = path.kernel
    h = path.step
    c = path.states[0].c
    a = path.states[0].alpha
    out = np.empty((len(path.states), y.shape[0], y.shape[1]))
    out[0] = y
    for k in range(path.steps):
        with np.errstate(over="ignore", invalid="ignore"):
            c, a, y = _joint_step_arrays(c, a, y, h, path.order, cfg)
        if not np.isfinite(y).all():
            raise BlowupError(f"shape flow blow-up at step {k}", step_index=k)
        out[k + 1] = y
    return out
