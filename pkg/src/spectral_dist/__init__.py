"""Laplacian spectral kernels and distances on triangle meshes.

Two backends are provided: a truncated eigendecomposition (:mod:`.spectrum`)
and a spectrum-free evaluator built on rational filters and sparse solves
(:mod:`.spectrum_free`).
"""

from .filters import (
    CanonicalRationalFilter,
    Filter,
    RationalFilter,
    evaluate,
    fit_rational,
    rational_error,
    to_canonical,
)
from .io import export_field, load_field, load_mesh, save_mesh
from .laplacian import LaplacianPair, lambda_max_bound, lambda_max_estimate, laplacian_pair
from .mesh import MeshError, TriangleMesh, as_field, indicator
from .solvers import SolveOptions, factorize, solve_deflated, solve_spd
from .spectrum import (
    Spectrum,
    eigendecompose,
    residual_bound_check,
    truncated_distance,
    truncated_distance_field,
    truncated_kernel_column,
)
from .spectrum_free import (
    SpectralEvaluator,
    apply_operator,
    apply_pinv_power,
    apply_power,
    build_evaluator,
    distance,
    distance_field,
    kernel_column,
)

__version__ = "0.1.0"

__all__ = [
    "CanonicalRationalFilter", "Filter", "RationalFilter", "evaluate", "fit_rational", "rational_error",
    "to_canonical", "export_field", "load_field", "load_mesh", "save_mesh", "LaplacianPair",
    "lambda_max_bound", "lambda_max_estimate", "laplacian_pair", "MeshError", "TriangleMesh", "as_field",
    "indicator", "SolveOptions", "factorize", "solve_deflated", "solve_spd", "Spectrum", "eigendecompose",
    "residual_bound_check", "truncated_distance", "truncated_distance_field", "truncated_kernel_column",
    "SpectralEvaluator", "apply_operator", "apply_pinv_power", "apply_power", "build_evaluator", "distance",
    "distance_field", "kernel_column", "__version__",
]
