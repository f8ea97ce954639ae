"""Similarity-driven parameter-space partitioning for simulation ensembles."""

from .fields import (
    Ensemble,
    EnsembleError,
    Run,
    ScalarField,
    draw_seeds,
    load_ensemble,
    make_ensemble,
    normalize_fields,
    sample_field,
    save_ensemble,
)
from .synthetic import generate_synthetic
from .similarity import (
    DistanceMatrix,
    OverlapError,
    ShiftOptions,
    compute_run_matrix,
    compute_timestep_matrix,
    field_distance,
    interpolated_timestep_distance,
    load_matrix,
    run_distance,
    run_distance_shifted,
    save_matrix,
)
from .clustering import (
    GREY_ID,
    LINKAGES,
    PALETTES,
    ClusterAssignment,
    ClusterTree,
    ColorAssignment,
    assign_colors,
    height_for_count,
    hierarchical_cluster,
    prune,
    select_subtree,
)
from .embedding import (
    Embedding,
    TemporalCurves,
    barycenters,
    mds_embed,
    parameter_embedding,
    similarity_embedding,
    temporal_evolution,
)
from .svm import SvmConfig
from .expressions import ExpressionError, parse_projection_expr
from .partition import (
    BinaryMask,
    CorrelationResult,
    HyperSlice,
    LabelGrid,
    SvmModel,
    UncertaintyGrid,
    boundary_mask,
    correlation_ranking,
    extract_slice,
    label_grid,
    slice_pairs,
    train_svm,
    uncertainty_grid,
)

__version__ = "0.1.0"
