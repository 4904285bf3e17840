"""Geodesic fitting to landmark data and exp-parallel trajectory prediction.

Registration and geodesic regression minimize a corresponded sum-of-squares
landmark loss over the initial momenta (optionally also the control points)
by gradient descent with a backtracking line search.  The gradient is exact
for the discretized flow: the loss is reverse-accumulated through every
Runge-Kutta stage of the joint (control points, momenta, shape) integrator.

exp-parallelization turns a fitted subject-to-reference registration into a
predicted trajectory: the registration momenta are parallel-transported along
the reference geodesic and re-exponentiated at each requested time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelConfig, as_points, cross_kernel
from .shooting import (
    BlowupError,
    GeodesicPath,
    GeodesicState,
    IntegratorConfig,
    _joint_rhs,
)
from .transport import TransportConfig, parallel_transport

__all__ = [
    "FitConfig",
    "TimedShape",
    "TimeReparam",
    "FitResult",
    "FitDivergenceError",
    "landmark_loss",
    "rmse",
    "loss_and_gradient",
    "fit_geodesic",
    "register",
    "regression_constraints",
    "geodesic_regression",
    "exp_parallelize",
    "reparametrize_time",
]

_MAX_HALVINGS = 30


class FitDivergenceError(RuntimeError):
    """The line search could not find a finite loss after repeated halvings."""


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 500
    step_size: float = 1.0
    tolerance: float = 1e-10
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(steps=10))
    optimize_control_points: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size!r}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")


@dataclass(frozen=True)
class TimedShape:
    """A landmark set observed at a given time (years or normalized units)."""

    points: np.ndarray
    time: float

    def __post_init__(self):
        pts = as_points(self.points, "observation points")
        if not np.isfinite(pts).all():
            raise ValueError("observation points must be finite")
        if not np.isfinite(self.time):
            raise ValueError(f"observation time must be finite, got {self.time!r}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class TimeReparam:
    """Affine subject-to-reference time map: onset tau and pace rho > 0."""

    tau: float
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"pace must be positive, got {self.rho!r}")


@dataclass(frozen=True)
class FitResult:
    state: GeodesicState
    losses: tuple


def landmark_loss(deformed, target) -> float:
    """Corresponded sum of squared distances; zero iff the sets coincide."""
    deformed = as_points(deformed, "deformed points")
    target = as_points(target, "target points")
    if deformed.shape != target.shape:
        raise ValueError(f"point count mismatch: {deformed.shape} vs {target.shape}")
    return float(np.sum((deformed - target) ** 2))


def rmse(predicted, observed) -> float:
    """Root mean squared landmark distance between corresponded sets."""
    predicted = as_points(predicted, "predicted points")
    observed = as_points(observed, "observed points")
    if predicted.shape != observed.shape:
        raise ValueError(f"point count mismatch: {predicted.shape} vs {observed.shape}")
    return float(np.sqrt(np.mean(np.sum((predicted - observed) ** 2, axis=1))))


def reparametrize_time(t_subject: float, rp: TimeReparam, t_ref_baseline: float) -> float:
    """Map a subject time to reference-geodesic time: t_ref + rho * (t - tau)."""
    return t_ref_baseline + rp.rho * (t_subject - rp.tau)


# ---------------------------------------------------------------------------
# Joint-flow forward pass with a stage tape, and its reverse sweep.
# The joint state z = (c, a, y); cotangents are triples of like-shaped arrays.
# ---------------------------------------------------------------------------


def _rhs_vjp(c, a, y, bc, ba, by, kcfg):
    """Input cotangents (gc, ga, gy) of the joint velocity field at (c, a, y)."""
    s2 = kcfg.sigma**2
    K = cross_kernel(c, c, kcfg)
    Ky = cross_kernel(y, c, kcfg)
    # dc = K a
    ga = K @ bc
    P = (bc @ a.T) * K / s2
    S = P + P.T
    gc = S @ c - S.sum(axis=1)[:, None] * c
    # da_i = (1/s2) sum_j (a_i . a_j) K_ij (c_i - c_j)
    e = K / s2
    w = np.einsum("id,id->i", ba, c)[:, None] - ba @ c.T
    W2 = e * (w + w.T)
    ga += W2 @ a
    G = (a @ a.T) * e
    gc += G.sum(axis=1)[:, None] * ba - G @ ba
    B2 = G * w / s2
    S2 = B2 + B2.T
    gc += S2 @ c - S2.sum(axis=1)[:, None] * c
    # dy = Ky a
    ga += Ky.T @ by
    B3 = (by @ a.T) * Ky / s2
    gy = B3 @ c - B3.sum(axis=1)[:, None] * y
    gc += B3.T @ y - B3.sum(axis=0)[:, None] * c
    return gc, ga, gy


def _zadd(u, v):
    return tuple(a + b for a, b in zip(u, v))


def _zscale(u, s):
    return tuple(s * a for a in u)


def _forward_tape(c0, a0, y0, steps, order, kcfg):
    """Integrate the joint system, recording every stage point for the reverse sweep."""
    h = 1.0 / steps
    z = (c0, a0, y0)
    nodes = [z]
    tape = []
    for k in range(steps):
        c, a, y = z
        with np.errstate(over="ignore", invalid="ignore"):
            if order == 2:
                d1 = _joint_rhs(c, a, y, kcfg)
                mid = (c + 0.5 * h * d1[0], a + 0.5 * h * d1[1], y + 0.5 * h * d1[2])
                d2 = _joint_rhs(*mid, kcfg)
                z = (c + h * d2[0], a + h * d2[1], y + h * d2[2])
                tape.append(((c, a, y), mid))
            else:
                d1 = _joint_rhs(c, a, y, kcfg)
                s2_ = (c + 0.5 * h * d1[0], a + 0.5 * h * d1[1], y + 0.5 * h * d1[2])
                d2 = _joint_rhs(*s2_, kcfg)
                s3_ = (c + 0.5 * h * d2[0], a + 0.5 * h * d2[1], y + 0.5 * h * d2[2])
                d3 = _joint_rhs(*s3_, kcfg)
                s4_ = (c + h * d3[0], a + h * d3[1], y + h * d3[2])
                d4 = _joint_rhs(*s4_, kcfg)
                z = (
                    c + (h / 6.0) * (d1[0] + 2.0 * d2[0] + 2.0 * d3[0] + d4[0]),
                    a + (h / 6.0) * (d1[1] + 2.0 * d2[1] + 2.0 * d3[1] + d4[1]),
                    y + (h / 6.0) * (d1[2] + 2.0 * d2[2] + 2.0 * d3[2] + d4[2]),
                )
                tape.append(((c, a, y), s2_, s3_, s4_))
        if not all(np.isfinite(part).all() for part in z):
            raise BlowupError(f"flow blow-up at step {k}", step_index=k)
        nodes.append(z)
    return nodes, tape


def _step_vjp(entry, bnext, h, order, kcfg):
    """Pull a cotangent back through one recorded Runge-Kutta step."""
    if order == 2:
        z, mid = entry
        u = _zscale(_rhs_vjp(*mid, *bnext, kcfg), h)
        back = _zscale(_rhs_vjp(*z, *u, kcfg), 0.5 * h)
        return _zadd(_zadd(bnext, u), back)
    z, s2_, s3_, s4_ = entry
    kb4 = _zscale(bnext, h / 6.0)
    sb4 = _rhs_vjp(*s4_, *kb4, kcfg)
    kb3 = _zadd(_zscale(bnext, h / 3.0), _zscale(sb4, h))
    sb3 = _rhs_vjp(*s3_, *kb3, kcfg)
    kb2 = _zadd(_zscale(bnext, h / 3.0), _zscale(sb3, 0.5 * h))
    sb2 = _rhs_vjp(*s2_, *kb2, kcfg)
    kb1 = _zadd(_zscale(bnext, h / 6.0), _zscale(sb2, 0.5 * h))
    sb1 = _rhs_vjp(*z, *kb1, kcfg)
    return _zadd(_zadd(_zadd(_zadd(bnext, sb1), sb2), sb3), sb4)


def _evaluate_loss(c0, a0, y0, constraints, icfg, kcfg):
    nodes, _ = _forward_tape(c0, a0, y0, icfg.steps, icfg.order, kcfg)
    return sum(landmark_loss(nodes[k][2], target) for k, target in constraints)


def loss_and_gradient(c0, a0, baseline, constraints, icfg: IntegratorConfig, kcfg: KernelConfig):
    """Trajectory loss and its exact gradient for the discretized flow.

    `constraints` is a sequence of (node_index, target_points) pairs; the loss
    is the summed landmark loss of the flowed baseline at those nodes.
    Returns (loss, grad_alpha0, grad_c0); the reverse sweep runs through every
    integrator stage, so the gradients match the discrete forward pass to
    machine precision.
    """
    c0 = as_points(c0, "control points")
    a0 = as_points(a0, "momenta")
    y0 = as_points(baseline, "baseline shape")
    constraints = [(int(k), as_points(t, "target")) for k, t in constraints]
    for k, target in constraints:
        if not 0 <= k <= icfg.steps:
            raise ValueError(f"constraint node {k} outside 0..{icfg.steps}")
        if target.shape != y0.shape:
            raise ValueError(f"target shape {target.shape} != baseline shape {y0.shape}")
    nodes, tape = _forward_tape(c0, a0, y0, icfg.steps, icfg.order, kcfg)
    loss = sum(landmark_loss(nodes[k][2], target) for k, target in constraints)
    h = 1.0 / icfg.steps
    bar = tuple(np.zeros_like(part) for part in nodes[-1])
    for k in range(icfg.steps, 0, -1):
        for node, target in constraints:
            if node == k:
                bar = (bar[0], bar[1], bar[2] + 2.0 * (nodes[k][2] - target))
        bar = _step_vjp(tape[k - 1], bar, h, icfg.order, kcfg)
    return loss, bar[1], bar[0]


def fit_geodesic(c0, baseline, constraints, fcfg: FitConfig, kcfg: KernelConfig) -> FitResult:
    """Gradient descent on the initial momenta (and optionally control points).

    Momenta start at zero.  Each iteration backtracks by halving the step until
    the loss strictly decreases; a step that blows up the integrator counts as
    a failed try, and thirty consecutive failed halvings with no finite loss
    abort the fit.  Stops at max_iters or when the relative loss decrease
    drops below fcfg.tolerance.
    """
    c0 = as_points(c0, "control points")
    y0 = as_points(baseline, "baseline shape")
    icfg = fcfg.integrator
    c = c0.copy()
    a = np.zeros_like(c0)

    def evaluate(c_try, a_try):
        try:
            return _evaluate_loss(c_try, a_try, y0, constraints, icfg, kcfg)
        except BlowupError:
            return np.inf

    loss, ga, gc = loss_and_gradient(c, a, y0, constraints, icfg, kcfg)
    losses = [loss]
    if loss == 0.0:
        return FitResult(state=GeodesicState(c, a), losses=tuple(losses))
    step_size = fcfg.step_size
    for _ in range(fcfg.max_iters):
        accepted = False
        any_finite = False
        for _halving in range(_MAX_HALVINGS + 1):
            a_try = a - step_size * ga
            c_try = c - step_size * gc if fcfg.optimize_control_points else c
            trial = evaluate(c_try, a_try)
            if np.isfinite(trial):
                any_finite = True
                if trial < loss:
                    accepted = True
                    break
            step_size *= 0.5
        if not accepted:
            if not any_finite:
                raise FitDivergenceError(
                    f"no finite loss after {_MAX_HALVINGS} step halvings"
                )
            break  # stalled at a numerical optimum
        rel_decrease = (loss - trial) / loss
        a, c, loss = a_try, c_try, trial
        losses.append(loss)
        if rel_decrease < fcfg.tolerance or loss == 0.0:
            break
        _, ga, gc = loss_and_gradient(c, a, y0, constraints, icfg, kcfg)
        step_size *= 2.0
    return FitResult(state=GeodesicState(c, a), losses=tuple(losses))


def register(source, target, c0, fcfg: FitConfig, kcfg: KernelConfig) -> GeodesicState:
    """Fit the geodesic deforming `source` onto `target` at t = 1."""
    source = as_points(source, "source shape")
    target = as_points(target, "target shape")
    if source.shape != target.shape:
        raise ValueError(f"source shape {source.shape} != target shape {target.shape}")
    result = fit_geodesic(c0, source, [(fcfg.integrator.steps, target)], fcfg, kcfg)
    return result.state


def regression_constraints(observations, steps: int):
    """Snap time-stamped observations onto integrator nodes.

    Times are mapped affinely onto [0, 1] (earliest to 0, latest to 1) and
    each observation is attached to its nearest node on a grid of `steps`
    intervals.  Returns a list of (node, points) pairs.
    """
    observations = list(observations)
    if len(observations) < 2:
        raise ValueError(f"need at least 2 observations, got {len(observations)}")
    times = np.array([obs.time for obs in observations], dtype=float)
    t0, t1 = times.min(), times.max()
    if t1 <= t0:
        raise ValueError("observation times must span a positive interval")
    return [
        (int(np.floor((obs.time - t0) / (t1 - t0) * steps + 0.5)), obs.points)
        for obs in observations
    ]


def geodesic_regression(
    baseline, observations, c0, fcfg: FitConfig, kcfg: KernelConfig
) -> GeodesicState:
    """Least-squares geodesic through time-stamped observations of a shape.

    Observation times are mapped affinely onto [0, 1] (earliest to 0, latest
    to 1) and each observation is matched at the nearest integrator node.
    """
    baseline = as_points(baseline, "baseline shape")
    constraints = regression_constraints(observations, fcfg.integrator.steps)
    result = fit_geodesic(c0, baseline, constraints, fcfg, kcfg)
    return result.state


def exp_parallelize(
    reference: GeodesicPath,
    omega0,
    eval_times,
    shape,
    tcfg: TransportConfig,
    kcfg: KernelConfig,
) -> np.ndarray:
    """Predicted shapes along the trajectory exp-parallel to a reference geodesic.

    The momenta omega0, expressed at the start of the reference geodesic, are
    parallel-transported along it; at each requested time (snapped to the
    nearest transport node) a unit-time geodesic is shot from the transported
    momenta and the reference shape carried to that node is flowed through it.
    Returns a (len(eval_times), m, d) array of predictions.
    """
    omega0 = as_points(omega0, "omega0")
    y0 = as_points(shape, "shape")
    eval_times = np.asarray(list(eval_times), dtype=float)
    if eval_times.size and (eval_times.min() < 0.0 or eval_times.max() > 1.0):
        raise ValueError(f"eval_times must lie in [0, 1], got {eval_times}")
    s0 = reference.states[0]
    N = tcfg.steps
    result = parallel_transport(s0, omega0, tcfg, kcfg)
    carried, _ = _forward_tape(s0.c, s0.alpha, y0, N, tcfg.main_order, kcfg)
    predictions = np.empty((eval_times.size, y0.shape[0], y0.shape[1]))
    for idx, t in enumerate(eval_times):
        node = int(np.floor(t * N + 0.5))
        c_k = result.states[node].c
        omega_k = result.omegas[node]
        y_k = carried[node][2]
        flowed, _ = _forward_tape(c_k, omega_k, y_k, N, tcfg.main_order, kcfg)
        predictions[idx] = flowed[-1][2]
    return predictions
