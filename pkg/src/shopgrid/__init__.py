"""Region-level shopping pattern prediction on a city grid.

Fuses a sparse region shopping-pattern matrix with a dense mobility
matrix through a shared latent factorization, spatially regularized by
gravity-model inter-region interactions. Includes NMF pattern
extraction, gravity fitting, holdout evaluation, a synthetic-city
generator, and a CLI (``shopgrid``).
"""

from ._kernels import BACKEND
from .evaluate import (
    MetricsReport,
    RowHoldoutSplit,
    improvement_pct,
    mae,
    rmse,
    run_experiment,
    split_rows,
)
from .factorize import (
    VARIANTS,
    FactorModel,
    Hyperparams,
    LossTrace,
    RegularizerSpec,
    gradient,
    neighbor_weights,
    objective,
    predict,
    train,
)
from .gravity import (
    FlowTable,
    GravityParams,
    TripRecord,
    build_flows,
    combined_weights,
    fit_gravity,
    interaction_matrix,
)
from .grid import GeoPoint, RegionGrid, center_distance, neighbors, region_of
from .patterns import (
    ActivityShareMatrix,
    BrowsingRecord,
    CheckinRecord,
    CountMatrix,
    MobilityPatternMatrix,
    ShoppingPatternMatrix,
    activity_shares,
    aggregate_mobility,
    aggregate_shopping,
    build_count_matrix,
    nmf,
    top_categories,
)
from .synth import GravityTruth, SynthConfig, SynthTruth, generate, generate_events

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "VARIANTS",
    "ActivityShareMatrix",
    "BrowsingRecord",
    "CheckinRecord",
    "CountMatrix",
    "FactorModel",
    "FlowTable",
    "GeoPoint",
    "GravityParams",
    "GravityTruth",
    "Hyperparams",
    "LossTrace",
    "MetricsReport",
    "MobilityPatternMatrix",
    "RegionGrid",
    "RegularizerSpec",
    "RowHoldoutSplit",
    "ShoppingPatternMatrix",
    "SynthConfig",
    "SynthTruth",
    "TripRecord",
    "activity_shares",
    "aggregate_mobility",
    "aggregate_shopping",
    "build_count_matrix",
    "build_flows",
    "center_distance",
    "combined_weights",
    "fit_gravity",
    "generate",
    "generate_events",
    "gradient",
    "improvement_pct",
    "interaction_matrix",
    "mae",
    "neighbor_weights",
    "neighbors",
    "nmf",
    "objective",
    "predict",
    "region_of",
    "rmse",
    "run_experiment",
    "split_rows",
    "top_categories",
    "train",
]
