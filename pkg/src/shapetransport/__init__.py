"""Geodesic shooting and parallel transport on kernel landmark manifolds.

Diffeomorphic deformations of R^d are parametrized by control points and
momenta through a Gaussian kernel; geodesics are shot by integrating the
Hamiltonian equations, tangent vectors are parallel-transported with the
fanning scheme, and fitted deformations are extrapolated into predicted shape
trajectories by exp-parallelization.  A Christoffel-symbol oracle provides
independent ground truth at small dimension.
"""

from .kernels import (
    KernelConfig,
    KernelSolveError,
    apply_kernel,
    energy_gradient,
    kernel_inner,
    kernel_matrix,
    kernel_value,
    solve_kernel,
)
from .oracle import (
    christoffel,
    metric_tensor,
    momenta_to_tangent,
    oracle_transport,
    tangent_to_momenta,
    transport_ode,
)
from .registration import (
    FitConfig,
    FitDivergenceError,
    TimedShape,
    TimeReparam,
    exp_parallelize,
    fit_geodesic,
    geodesic_regression,
    landmark_loss,
    loss_and_gradient,
    register,
    reparametrize_time,
    rmse,
)
from .shooting import (
    BlowupError,
    GeodesicPath,
    GeodesicState,
    IntegratorConfig,
    energy,
    flow_shape,
    hamiltonian_rhs,
    shoot,
    step,
)
from .transport import (
    ConservationError,
    TransportConfig,
    TransportResult,
    conservation_correction,
    fanning_step,
    jacobi_difference,
    parallel_transport,
    relative_k_error,
    variant_config,
)

__version__ = "0.1.0"
