"""Numerical machinery for strip maps with contracted fibers.

The package builds piecewise hyperbolic skew products on the unit square,
estimates the invariant density of their expanding base factor, lifts it to
a two-dimensional invariant-measure estimate, and evaluates the geometric
conditions (strip fatness, pairwise transversality, distortion constants,
and the fiberwise L2 overlap criterion) that decide whether the lifted
measure is absolutely continuous.
"""

__version__ = "0.1.0"

from .errors import (
    BudgetError,
    CacheError,
    ConfigError,
    ConvergenceError,
    DegenerateExtensionError,
    DegenerateScaleError,
    HorseshoeError,
    ItineraryError,
    OutOfDomainError,
    ParameterError,
    ResolutionError,
    SampleDiscardError,
    StageError,
    StripBoundary,
)
from .maps import (
    AffineConjugacy,
    BranchMap,
    FiberMap,
    GhmSpec,
    HyperbolicityReport,
    SkewBranch,
    Strip,
    affine_fiber,
    apply_branch,
    branch_derivative,
    make_affine_example,
    make_baker,
    make_custom_skew,
    validate_hyperbolicity,
)
from .symbolic import (
    MInventory,
    base_cylinder,
    base_interval_length,
    cylinder_diameter,
    cylinder_table,
    enumerate_M,
    fiber_image,
    fiber_width_fn,
    load_inventory,
    m_inventory,
    save_inventory,
    truncate_alphabet,
    window_count,
)
from .measures import (
    CriterionTable,
    Density1D,
    SrbEstimate,
    density_grid,
    fiber_l2_norm,
    fiber_l2_norms,
    lift_srb,
    load_srb,
    push_forward,
    save_srb,
    tsujii_criterion,
    ulam_acip,
    ulam_transition,
)
from .conditions import (
    FatnessFit,
    NtrSumReport,
    NtrSweep,
    TransversalityVerdict,
    classify_transversal,
    fatness_fit,
    manifold_envelope,
    ntr_sum,
    ntr_sweep,
    overlap_volume,
    tail_slope_hull,
)
from .diagnostics import (
    DiagnosticsReport,
    adapted_derivative,
    fiber_ratio_constant,
    margin_constants,
    run_diagnostics,
    stable_distortion_ratio,
    unstable_direction,
)
from .figures import emit_strip_polygons, strip_polygons
from .cli import RunConfig, RunManifest, cache_roundtrip, run_pipeline

__all__ = [name for name in dir() if not name.startswith("_")]
