"""Long-range-dependent spatiotemporal Gaussian fields and their non-central
limits.

The package simulates second-order Gaussian random fields with power-law
covariance tails on spheres and on compact convex sets, computes quadratic
and Hermite-subordinated functionals of them, and verifies the limit laws
numerically: spectra of the limiting Riesz-type operator, cumulants and
Fredholm-determinant characteristic functions of the Rosenblatt-type limit,
chi-squared series and spectral double-integral samplers, and finite-horizon
convergence diagnostics.

Heavy kernels compile with numba when available; set LRDLIMITS_DISABLE_NUMBA=1
to force the pure numpy fallbacks (same results, slower).
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    CapacityError,
    ConsistencyError,
    LrdError,
    NumericalError,
    ValidationError,
)
from .model import ModelParams, covariance, riesz_fourier_c, scaling_d_T, spectral_density
from .specfun import (
    eigenspace_dim,
    eigenspace_dims,
    gegenbauer_kernel,
    hermite_coeffs,
    hermite_poly,
    sphere_area,
)
from .spectra import (
    AngularSpectrum,
    RieszSpectrum,
    TemporalEigensystem,
    angular_coeffs,
    riesz_spectrum,
    temporal_eigs,
    trace_power,
)
from .rosenblatt import (
    CharacteristicCurve,
    CumulantTable,
    cumulants_montecarlo,
    cumulants_spectral,
    finite_T_cf,
    fredholm_det,
    limit_cf,
    limit_cf_product,
    sample_S_infinity,
    sample_quadratic_form,
    series_weights,
)
from .fieldsim import (
    KLSample,
    coupled_gap_weights,
    evaluate_field,
    functional_A_T,
    functional_S_T,
    make_grid,
    reduction_ensemble,
    sample_field,
)
from .convex import (
    ConvexBody,
    SpectralGrid,
    ball_body,
    box_body,
    plan_spectral_grid,
    riesz_constant,
    riesz_double_integral,
    sample_convex_limit,
    spectral_variance,
)

__all__ = [
    "__version__",
    "LrdError", "ValidationError", "CapacityError", "NumericalError",
    "AccuracyError", "ConsistencyError",
    "ModelParams", "covariance", "spectral_density", "scaling_d_T",
    "riesz_fourier_c",
    "sphere_area", "eigenspace_dim", "eigenspace_dims", "gegenbauer_kernel",
    "hermite_poly", "hermite_coeffs",
    "AngularSpectrum", "TemporalEigensystem", "RieszSpectrum",
    "angular_coeffs", "temporal_eigs", "riesz_spectrum", "trace_power",
    "CumulantTable", "CharacteristicCurve", "cumulants_spectral",
    "cumulants_montecarlo", "limit_cf", "limit_cf_product", "finite_T_cf",
    "fredholm_det", "series_weights", "sample_S_infinity",
    "sample_quadratic_form",
    "KLSample", "sample_field", "make_grid", "evaluate_field",
    "functional_S_T", "functional_A_T", "coupled_gap_weights",
    "reduction_ensemble",
    "ConvexBody", "box_body", "ball_body", "SpectralGrid",
    "plan_spectral_grid", "riesz_constant", "riesz_double_integral",
    "spectral_variance", "sample_convex_limit",
]
