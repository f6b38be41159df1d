"""Numerical laboratory for Moebius-weighted averages of noncommutative flows.

The package sieves the Moebius function, evaluates exponential sums with
polynomial phases, averages bounded operator flows (matrix conjugation
orbits, fermionic quasi-free dynamics, free-group shifts) against mu, and
ships an experiment CLI that emits reproducible CSV/JSON artifacts.
"""

from .moebius import (
    MoebiusTable,
    PolynomialPhase,
    build_table,
    exp_sum,
    linear_phase,
    load_or_build_table,
    mertens,
    mertens_series,
    phase_values,
    squarefree_count,
    squarefree_density,
    weighted_average,
)
from .linalg import (
    SpectralDecomp,
    eig_unitary,
    haar_unitary,
    hs_norm,
    op_norm,
    random_density,
    unitary_power,
)
from .flows import (
    AverageSeries,
    BSZReport,
    DecayFit,
    Flow,
    FlowEvaluationError,
    average_series,
    bsz_check,
    constant_flow,
    decay_fit,
    geometric_checkpoints,
    periodic_flow,
    rotation_flow,
)
from .matrix_dynamics import (
    FiniteAverageBound,
    QuantizedUnitary,
    TraceProductSpec,
    ad_flow,
    finite_vn_average_bound,
    quantize_unitary,
    rank_one_flow,
    trace_product_sum,
)
from .car_fock import (
    CARPolynomial,
    annihilation,
    bogoliubov_apply,
    counterexample_flow,
    creation,
    creation_matrix,
    fock_space,
    gamma,
    normal_order,
    pure_point_flow,
    quasifree_density_matrix,
    quasifree_eval,
)
from .free_words import (
    GroupElementSum,
    ReducedWord,
    arcsine_moments,
    bkn_moment_norm,
    catalan,
    cumulants_to_moments,
    free_clt_moments,
    free_shift_flow,
    moments_to_cumulants,
    nc_partitions,
    semicircle_moments,
)

__version__ = "0.1.0"

__all__ = [
    "AverageSeries",
    "BSZReport",
    "CARPolynomial",
    "DecayFit",
    "FiniteAverageBound",
    "Flow",
    "FlowEvaluationError",
    "GroupElementSum",
    "MoebiusTable",
    "PolynomialPhase",
    "QuantizedUnitary",
    "ReducedWord",
    "SpectralDecomp",
    "TraceProductSpec",
    "ad_flow",
    "annihilation",
    "arcsine_moments",
    "average_series",
    "bkn_moment_norm",
    "bogoliubov_apply",
    "bsz_check",
    "build_table",
    "catalan",
    "constant_flow",
    "counterexample_flow",
    "creation",
    "creation_matrix",
    "cumulants_to_moments",
    "decay_fit",
    "eig_unitary",
    "exp_sum",
    "finite_vn_average_bound",
    "fock_space",
    "free_clt_moments",
    "free_shift_flow",
    "gamma",
    "geometric_checkpoints",
    "haar_unitary",
    "hs_norm",
    "linear_phase",
    "load_or_build_table",
    "mertens",
    "mertens_series",
    "moments_to_cumulants",
    "nc_partitions",
    "normal_order",
    "op_norm",
    "periodic_flow",
    "phase_values",
    "pure_point_flow",
    "quantize_unitary",
    "quasifree_density_matrix",
    "quasifree_eval",
    "random_density",
    "rank_one_flow",
    "rotation_flow",
    "semicircle_moments",
    "squarefree_count",
    "squarefree_density",
    "trace_product_sum",
    "unitary_power",
    "weighted_average",
]
