"""Volumes of monomial graded linear series on projective space.

Counting dimensions, self-intersections of resolved base loci, equilibrium
symbols, Monge-Ampere masses and Bergman weights, all for torus-invariant data
where each quantity is exactly computable.
"""
__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConvergenceError,
    EnumerationCapError,
    GradvolError,
    HypothesisNotMet,
    InvariantViolation,
    MassError,
    SeriesError,
    TrivialPieceError,
)
from .lattice_series import (
    MonomialSeries,
    complete_series,
    dim_piece,
    estimate_volume,
    nonfg_series,
    fujita_chain,
    graded_piece,
    ideal_series,
    is_birational_at,
    series_from_generators,
    truncate,
)
from .polytope import RationalPolytope, convex_hull, lattice_points, mk_self_intersection, volume
from .envelope import (
    GridSpec,
    PLConvexFunction,
    SmoothToricWeight,
    envelope_level,
    equilibrium_symbol,
    evaluate_on_grid,
    fubini_study_weight,
    legendre,
)
from .monge_ampere import (
    active_slopes,
    analytic_mass_limit,
    comparison_check,
    ma_mass_grid,
    ma_mass_pl,
    monotone_convergence_harness,
)
from .bergman import bergman_weight, monomial_norm, sandwich_report
from .config import ExperimentConfig, parse_config
from .pipeline import VerificationReport, emit_report, run_verify
