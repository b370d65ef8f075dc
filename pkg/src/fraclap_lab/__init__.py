"""Numerical lab for the Riesz fractional gradient and fractional p-Laplacian in 1-D."""

from .besov import BesovProbe, besov_seminorm, fit_exponent, probe, second_difference, second_difference_norm
from .errors import (
    AdmissibilityError,
    ConfigurationError,
    ConvergenceError,
    FracLabError,
    GeometryError,
    MeasurementError,
    NumericError,
    ParameterError,
    ResolutionError,
)
from .fracops import (
    FracGradOperator,
    apply_frac_divergence,
    apply_frac_gradient,
    assemble_frac_divergence_direct,
    assemble_frac_gradient,
    duality_defect,
    mu,
    pointwise_bound_ratio,
)
from .grid import (
    DiscreteFunction,
    Grid,
    Region,
    build_grid,
    inner_region,
    lp_norm,
    outer_region,
    sample,
)
from .harness import RegularityReport, RunConfig, predicted_exponent
from .solver import ProblemSpec, Solution, dense_linear_solution, energy, energy_gradient, solve_dirichlet
from .translations import (
    Cutoff,
    admissible_directions,
    commutator,
    commutator_bound_ratio,
    localized_translate,
    make_cutoff,
)

__version__ = "0.1.0"
