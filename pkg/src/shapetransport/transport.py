"""Fanning scheme for parallel transport along control-point geodesics.

Transport of a momenta set omega along the geodesic of (c, alpha) is built
step by step from Jacobi fields: at each of the N subdivisions, geodesics
perturbed by +/- h*omega are shot for one step, the Jacobi field is read off
by finite difference of their control points, and the transported momenta
are recovered through a kernel solve.  A final rescaling against the geodesic
momenta restores the two invariants of exact parallel transport (the kernel
norm of omega and its pairing with alpha).

Variants:
  * wec  - skip the conservation rescaling,
  * rk4  - integrate the main geodesic with the classical order-4 scheme,
  * spg  - one-sided Jacobi difference from a single perturbed geodesic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import KernelConfig, as_points, kernel_matrix, solve_kernel
from .shooting import GeodesicState, step

__all__ = [
    "TransportConfig",
    "TransportResult",
    "ConservationError",
    "variant_config",
    "jacobi_difference",
    "conservation_correction",
    "fanning_step",
    "parallel_transport",
    "relative_k_error",
]

VARIANTS = ("main", "wec", "rk4", "spg")

# Below this threshold on q - b^2/a the candidate momenta are treated as
# collinear with the geodesic momenta and only the pairing is restored.
_COLLINEAR_TOL = 1e-12
# Relative slack on the feasibility of the conservation targets.
_FEASIBILITY_TOL = 1e-6


class ConservationError(RuntimeError):
    """Conservation targets cannot be met by any beta*omega + delta*alpha."""


@dataclass(frozen=True)
class TransportConfig:
    """Fanning-scheme settings: step count, main integrator order, variant flags."""

    steps: int
    main_order: int = 2
    conserve: bool = True
    jacobi_mode: str = "central"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.main_order not in (2, 4):
            raise ValueError(f"main_order must be 2 or 4, got {self.main_order}")
        if self.jacobi_mode not in ("central", "single"):
            raise ValueError(f"jacobi_mode must be 'central' or 'single', got {self.jacobi_mode!r}")


@dataclass(frozen=True)
class TransportResult:
    """Transported momenta at every node plus conservation diagnostics."""

    omega_final: np.ndarray
    states: tuple
    omegas: tuple
    sq_norms: np.ndarray
    pairings: np.ndarray

    @property
    def per_step(self):
        return tuple(zip(self.states, self.omegas))


def variant_config(name: str, steps: int) -> TransportConfig:
    """TransportConfig for one of the named variants: main, wec, rk4, spg."""
    if name == "main":
        return TransportConfig(steps=steps)
    if name == "wec":
        return TransportConfig(steps=steps, conserve=False)
    if name == "rk4":
        return TransportConfig(steps=steps, main_order=4)
    if name == "spg":
        return TransportConfig(steps=steps, jacobi_mode="single")
    raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")


def jacobi_difference(c_plus, c_minus_or_main, h: float, mode: str = "central") -> np.ndarray:
    """Finite-difference Jacobi field from perturbed-geodesic control points.

    central: (c_plus - c_minus) / (2h);  single: (c_plus - c_main) / h.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    c_plus = as_points(c_plus, "c_plus")
    other = as_points(c_minus_or_main, "c_minus_or_main")
    if c_plus.shape != other.shape:
        raise ValueError(f"point count mismatch: {c_plus.shape} vs {other.shape}")
    if mode == "central":
        return (c_plus - other) / (2.0 * h)
    if mode == "single":
        return (c_plus - other) / h
    raise ValueError(f"mode must be 'central' or 'single', got {mode!r}")


def conservation_correction(
    omega_tilde,
    alpha,
    c,
    target_sq_norm: float,
    target_pairing: float,
    kcfg: KernelConfig,
) -> np.ndarray:
    """Rescale omega_tilde to beta*omega_tilde + delta*alpha hitting both targets.

    beta and delta solve <alpha, omega>_c = target_pairing and
    <omega, omega>_c = target_sq_norm, with <u, v>_c = u^T K_c v.  The positive
    beta root is chosen.  When omega_tilde is numerically collinear with alpha
    the targets are feasible only if target_sq_norm = target_pairing^2 / <alpha,
    alpha>_c, in which case (target_pairing / <alpha, alpha>_c) * alpha is
    returned.  A zero-velocity geodesic leaves omega_tilde uncorrected.
    """
    if target_sq_norm < 0:
        raise ValueError(f"target_sq_norm must be >= 0, got {target_sq_norm!r}")
    omega_tilde = as_points(omega_tilde, "omega_tilde")
    alpha = as_points(alpha, "alpha")
    K = kernel_matrix(c, kcfg)
    a = float(np.sum(alpha * (K @ alpha)))
    if a <= _COLLINEAR_TOL:
        warnings.warn(
            "zero-velocity geodesic: conservation correction skipped", RuntimeWarning
        )
        return omega_tilde
    b = float(np.sum(alpha * (K @ omega_tilde)))
    q = float(np.sum(omega_tilde * (K @ omega_tilde)))
    needed = target_sq_norm - target_pairing**2 / a
    available = q - b**2 / a
    scale = max(target_sq_norm, target_pairing**2 / a)
    if available <= _COLLINEAR_TOL:
        if abs(needed) <= _FEASIBILITY_TOL * max(scale, _COLLINEAR_TOL):
            return (target_pairing / a) * alpha
        raise ConservationError(
            "candidate momenta are collinear with the geodesic momenta but the "
            f"targets require an orthogonal component (deficit {needed:.3e})"
        )
    if needed < 0:
        if -needed <= _FEASIBILITY_TOL * scale:
            needed = 0.0
        else:
            raise ConservationError(
                f"targets violate the Cauchy-Schwarz bound: norm target {target_sq_norm:.6e} "
                f"< pairing^2/|alpha|^2 = {target_pairing**2 / a:.6e}"
            )
    beta = float(np.sqrt(needed / available))
    delta = (target_pairing - beta * b) / a
    return beta * omega_tilde + delta * alpha


def fanning_step(
    c_k,
    alpha_k,
    omega_k,
    h: float,
    tcfg: TransportConfig,
    kcfg: KernelConfig,
    targets=None,
):
    """One subdivision of the fanning scheme.

    Advances the main geodesic one step at tcfg.main_order, shoots the
    perturbed geodesics (alpha_k +/- h*omega_k) one order-2 step, reads the
    Jacobi field off their control points and solves for the transported
    momenta, then applies the conservation rescaling when enabled.  `targets`
    holds the (sq_norm, pairing) values fixed at the start of the transport;
    when None and conservation is on they are read from the incoming node.
    """
    c_k = as_points(c_k, "control points")
    alpha_k = as_points(alpha_k, "momenta")
    omega_k = as_points(omega_k, "transported momenta")
    if not (c_k.shape == alpha_k.shape == omega_k.shape):
        raise ValueError("control points, momenta and transported momenta must share a shape")
    main_next = step(GeodesicState(c_k, alpha_k), h, tcfg.main_order, kcfg)
    if not omega_k.any():
        return main_next.c, main_next.alpha, np.zeros_like(omega_k)
    if targets is None and tcfg.conserve:
        K0 = kernel_matrix(c_k, kcfg)
        targets = (
            float(np.sum(omega_k * (K0 @ omega_k))),
            float(np.sum(alpha_k * (K0 @ omega_k))),
        )
    plus = step(GeodesicState(c_k, alpha_k + h * omega_k), h, 2, kcfg)
    if tcfg.jacobi_mode == "central":
        minus = step(GeodesicState(c_k, alpha_k - h * omega_k), h, 2, kcfg)
        J = jacobi_difference(plus.c, minus.c, h, "central")
    else:
        J = jacobi_difference(plus.c, main_next.c, h, "single")
    omega_tilde = solve_kernel(main_next.c, J / h, kcfg)
    if tcfg.conserve:
        omega_next = conservation_correction(
            omega_tilde, main_next.alpha, main_next.c, targets[0], targets[1], kcfg
        )
    else:
        omega_next = omega_tilde
    return main_next.c, main_next.alpha, omega_next


def parallel_transport(
    s0: GeodesicState,
    omega0,
    tcfg: TransportConfig,
    kcfg: KernelConfig,
) -> TransportResult:
    """Transport omega0 along the geodesic of s0 over [0, 1] in N fanning steps.

    Records the geodesic state and transported momenta at every node together
    with the per-node diagnostics omega^T K omega and alpha^T K omega; with
    conservation on, both stay at their initial values.
    """
    omega0 = as_points(omega0, "omega0")
    if omega0.shape != s0.c.shape:
        raise ValueError(f"omega0 shape {omega0.shape} != control points shape {s0.c.shape}")
    N = tcfg.steps
    h = 1.0 / N
    K0 = kernel_matrix(s0.c, kcfg)
    targets = (
        float(np.sum(omega0 * (K0 @ omega0))),
        float(np.sum(s0.alpha * (K0 @ omega0))),
    )
    states = [s0]
    omegas = [omega0.copy()]
    sq_norms = np.empty(N + 1)
    pairings = np.empty(N + 1)
    sq_norms[0], pairings[0] = targets
    c, alpha, omega = s0.c, s0.alpha, omega0
    for k in range(N):
        try:
            c, alpha, omega = fanning_step(c, alpha, omega, h, tcfg, kcfg, targets=targets)
        except (RuntimeError, ValueError) as exc:
            raise type(exc)(f"parallel transport failed at step {k}: {exc}") from exc
        states.append(GeodesicState(c, alpha))
        omegas.append(omega)
        Kk = kernel_matrix(c, kcfg)
        sq_norms[k + 1] = float(np.sum(omega * (Kk @ omega)))
        pairings[k + 1] = float(np.sum(alpha * (Kk @ omega)))
    return TransportResult(
        omega_final=omegas[-1],
        states=tuple(states),
        omegas=tuple(omegas),
        sq_norms=sq_norms,
        pairings=pairings,
    )


def relative_k_error(omega, omega_ref, c_ref, kcfg: KernelConfig) -> float:
    """Relative kernel-metric error |omega - omega_ref|_K / |omega_ref|_K at c_ref."""
    omega = as_points(omega, "omega")
    omega_ref = as_points(omega_ref, "omega_ref")
    K = kernel_matrix(c_ref, kcfg)
    diff = omega - omega_ref
    num = float(np.sum(diff * (K @ diff)))
    den = float(np.sum(omega_ref * (K @ omega_ref)))
    if den == 0.0:
        raise ValueError("reference momenta have zero kernel norm")
    return float(np.sqrt(max(num, 0.0) / den))
