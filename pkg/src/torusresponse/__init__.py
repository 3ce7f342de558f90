"""Linear response of stationary SDEs on the flat torus and the optimal
drift perturbation that maximises it."""

__version__ = "0.1.0"

from .basis import (
    BasisElement,
    OptimalPerturbation,
    PerturbationSpace,
    ProductBasis,
    RieszVector,
    VanishingResponseError,
    assemble_optimal_perturbation,
    enumerate_indices,
    eval_basis_field,
    eval_scalar_basis,
    hp_norm_sq,
    read_riesz_csv,
    write_riesz_csv,
)
from .estimator import (
    KdConfig,
    ResponseEstimate,
    estimate_response_table,
    estimate_responses,
    slope_match_check,
    sweep_observable,
)
from .io import emit_csv
from .model import OptimalResponse
from .oracle import (
    Grid,
    build_kernel_matrix,
    first_order_expansion_check,
    invariant_density,
    l2_smoothing_check,
    response_resolvent,
    spectral_diagnostics,
)
from .systems import SYSTEMS, get_system, reduced_space_basis
from .torus import SdeSystem, TorusDomain, VectorField, ergodic_average, simulate_em, wrap_point
