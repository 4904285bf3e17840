"""Shared fixtures: the canonical two-point instance and the expensive
session-wide computations (oracle run, convergence sweep, synthetic fits)
reused by both the module tests and the acceptance suite."""

import numpy as np
import pytest

from shapetransport import (
    FitConfig,
    GeodesicState,
    IntegratorConfig,
    KernelConfig,
    TimedShape,
    exp_parallelize,
    fit_geodesic,
    flow_shape,
    geodesic_regression,
    landmark_loss,
    register,
    rmse,
    shoot,
)
from shapetransport.kernels import kernel_matrix
from shapetransport.oracle import oracle_transport
from shapetransport.transport import parallel_transport, relative_k_error, variant_config


@pytest.fixture(scope="session")
def kcfg():
    return KernelConfig(sigma=1.0)


@pytest.fixture(scope="session")
def canonical(kcfg):
    """Two-point instance exercised throughout: squeeze geodesic plus offset momenta."""
    c0 = np.array([[0.0, 0.0], [1.0, 0.0]])
    a0 = np.array([[0.0, 0.5], [0.0, -0.5]])
    w0 = np.array([[0.3, 0.0], [0.0, 0.2]])
    return GeodesicState(c0, a0), w0


@pytest.fixture(scope="session")
def canonical_sweep(canonical, kcfg):
    """Transport errors per variant and N against the largest-N main run."""
    s0, w0 = canonical
    reference = parallel_transport(s0, w0, variant_config("main", 1600), kcfg)
    c_ref = reference.states[-1].c
    errors = {}
    for variant in ("main", "wec", "rk4", "spg"):
        grid = (25, 50, 100, 200, 400) if variant == "main" else (50, 100, 200)
        for n in grid:
            result = parallel_transport(s0, w0, variant_config(variant, n), kcfg)
            errors[(variant, n)] = relative_k_error(
                result.omega_final, reference.omega_final, c_ref, kcfg
            )
    return {"reference": reference, "errors": errors}


@pytest.fixture(scope="session")
def canonical_oracle(canonical, kcfg):
    """Christoffel-ODE transport of the canonical momenta at fine resolution."""
    s0, w0 = canonical
    omega_oracle, final = oracle_transport(s0, w0, 10000, kcfg)
    return {"omega": omega_oracle, "final": final}


@pytest.fixture(scope="session")
def registration_problem(kcfg):
    """Synthetic registration: known momenta deform a circle of landmarks."""
    c0 = np.array([[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]])
    alpha_true = np.array([[0.4, 0.1], [-0.2, 0.3], [0.1, -0.3], [-0.3, -0.2]])
    theta = np.linspace(0.0, 2.0 * np.pi, 21)[:-1]
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    icfg = IntegratorConfig(steps=10, order=2)
    path = shoot(GeodesicState(c0, alpha_true), icfg, kcfg)
    target = flow_shape(path, circle)[-1]
    return {
        "c0": c0,
        "alpha_true": alpha_true,
        "source": circle,
        "target": target,
        "integrator": icfg,
        "initial_loss": landmark_loss(circle, target),
    }


@pytest.fixture(scope="session")
def registration_fit(registration_problem, kcfg):
    prob = registration_problem
    fcfg = FitConfig(
        max_iters=400, step_size=1.0, tolerance=1e-13, integrator=prob["integrator"]
    )
    result = fit_geodesic(
        prob["c0"], prob["source"], [(prob["integrator"].steps, prob["target"])], fcfg, kcfg
    )
    K = kernel_matrix(prob["c0"], kcfg)
    diff = result.state.alpha - prob["alpha_true"]
    k_rel = float(
        np.sqrt(
            np.sum(diff * (K @ diff)) / np.sum(prob["alpha_true"] * (K @ prob["alpha_true"]))
        )
    )
    return {"result": result, "k_rel": k_rel}


@pytest.fixture(scope="session")
def pipeline(kcfg):
    """Full prediction pipeline on a synthetic exp-parallel subject.

    The subject is generated as an exact exp-parallel of a known reference
    geodesic (high-resolution transport); the pipeline then re-estimates
    everything from shape data alone: geodesic regression on the reference
    observations, registration of the subject baseline, transport of the
    fitted momenta and exp-parallelization at the prediction time.
    """
    c0 = np.array([[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]])
    alpha_ref = np.array([[0.5, 0.2], [0.3, -0.1], [0.2, 0.4], [0.4, -0.3]])
    omega_true = np.array([[0.0, 0.35], [0.15, 0.0], [0.0, -0.25], [0.2, 0.15]])
    theta = np.linspace(0.0, 2.0 * np.pi, 13)[:-1]
    baseline = 0.9 * np.column_stack([np.cos(theta), np.sin(theta)])
    icfg = IntegratorConfig(steps=20, order=2)
    true_path = shoot(GeodesicState(c0, alpha_ref), icfg, kcfg)
    ref_flow = flow_shape(true_path, baseline)
    observations = [
        TimedShape(ref_flow[0], 0.0),
        TimedShape(ref_flow[10], 0.5),
        TimedShape(ref_flow[20], 1.0),
    ]
    subject = exp_parallelize(
        true_path, omega_true, [0.0, 0.5, 1.0], baseline, variant_config("main", 400), kcfg
    )
    fitted = geodesic_regression(
        baseline,
        observations,
        c0,
        FitConfig(max_iters=400, step_size=1.0, tolerance=1e-13, integrator=icfg),
        kcfg,
    )
    registered = register(
        baseline,
        subject[0],
        c0,
        FitConfig(max_iters=400, step_size=1.0, tolerance=1e-13,
                  integrator=IntegratorConfig(steps=10, order=2)),
        kcfg,
    )
    fitted_path = shoot(fitted, icfg, kcfg)
    prediction = exp_parallelize(
        fitted_path, registered.alpha, [1.0], baseline, variant_config("main", 100), kcfg
    )[0]
    return {
        "c0": c0,
        "alpha_ref": alpha_ref,
        "omega_true": omega_true,
        "baseline": baseline,
        "observations": observations,
        "subject": subject,
        "fitted": fitted,
        "registered": registered,
        "prediction": prediction,
        "naive_rmse": rmse(subject[0], subject[2]),
        "prediction_rmse": rmse(prediction, subject[2]),
    }
