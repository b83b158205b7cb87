"""Time-periodic solutions of the damped (Brinkman-Forchheimer) Navier-Stokes equations on a torus."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("cbfed")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .analysis import (
    UniquenessReport,
    apriori_bound_check,
    compute_thresholds,
    decay_rate_fit,
    energy_residual_series,
)
from .forcing import ForcingSpec, ModalProfile, build_forcing, random_forcing
from .integrator import IntegrationError, IntegratorConfig, Trajectory, integrate_period, oracle_integrate, poincare_map, rhs_eval
from .nonlinear import NonlinearEvalConfig, bilinear_map, damping_map, trilinear_form
from .periodic import (
    PeriodicSolveReport,
    contraction_estimate,
    invariant_radius,
    picard_strong,
    solve_linear_periodic,
    solve_periodic,
)
from .spectral import (
    GridSpec,
    ModeSet,
    PhysicalParams,
    SpectralField,
    galerkin_truncate,
    inner,
    leray_project,
    norm,
    random_field,
    stokes_apply,
    to_physical,
    to_spectral,
    transform,
)

__all__ = [
    "__version__",
    "UniquenessReport",
    "apriori_bound_check",
    "compute_thresholds",
    "decay_rate_fit",
    "energy_residual_series",
    "ForcingSpec",
    "ModalProfile",
    "build_forcing",
    "random_forcing",
    "IntegrationError",
    "IntegratorConfig",
    "Trajectory",
    "integrate_period",
    "oracle_integrate",
    "poincare_map",
    "rhs_eval",
    "NonlinearEvalConfig",
    "bilinear_map",
    "damping_map",
    "trilinear_form",
    "PeriodicSolveReport",
    "contraction_estimate",
    "invariant_radius",
    "picard_strong",
    "solve_linear_periodic",
    "solve_periodic",
    "GridSpec",
    "ModeSet",
    "PhysicalParams",
    "SpectralField",
    "galerkin_truncate",
    "inner",
    "leray_project",
    "norm",
    "random_field",
    "stokes_apply",
    "to_physical",
    "to_spectral",
    "transform",
]
