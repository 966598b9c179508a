"""Bias-aware resampling and model search for doubly imbalanced binary data.

The package splits into six parts. `dataset` loads, generates and
splits quadrant-labelled records; `balance` turns three knobs into an
exact sampling plan and realises it; `metrics` scores predictions for
performance and group parity at once; `classifiers` holds the small
estimator zoo plus the score-file adapter; `search` sweeps the knob
lattice in two passes and extracts the Pareto front; `cli` wires it all
to a config file. Everything below is re-exported here so callers can
reach the working surface through one import.
"""

from .balance import (
    BalanceParams,
    PRESET_NAMES,
    PRESETS,
    QuadrantCounts,
    RestrictionReport,
    SamplingPlan,
    SetupPreset,
    allowed_interval,
    apportion,
    bound_at,
    check_restrictions,
    compute_plan,
    materialize_sample,
    max_sample_size,
    preset_plan,
    quadrant_bounds,
    sample_indices,
)
from .base import (
    ConfigError,
    FairsampleError,
    InfeasibleError,
    InputError,
    NotFittedError,
    PlanError,
    RowError,
    SchemaError,
    SearchError,
    TrainingError,
)
from .classifiers import (
    ClassifierSpec,
    ExternalScoreModel,
    GaussianNaiveBayes,
    LinearSVM,
    LogisticRegression,
    RandomForest,
    TrainedModel,
    build_estimator,
    classifier_kinds,
    fit,
    load_external_scores,
    predict_labels,
    register_kind,
)
from .dataset import (
    Dataset,
    FeaturePipeline,
    FeatureSpec,
    QUADRANT_NAMES,
    SYNTHETIC_SCHEMA,
    Schema,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    quadrant_counts,
    stratified_split,
    write_csv,
)
from .metrics import (
    ConfusionCounts,
    DI_ACCEPTABLE,
    GroupedPredictions,
    LossWeights,
    MetricReport,
    combined_loss,
    confusion,
    di_acceptable,
    di_loss,
    di_ratio,
    mcc,
    mcc_loss,
    metric_report,
    render,
    report_from_counts,
)
from .search import (
    EvaluationPoint,
    GridSpec,
    ParetoFront,
    SearchResult,
    full_search,
    grid_search_level0,
    grid_search_level1,
    inspect_point,
    pareto_front,
    point_seed,
    select_optimal,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "FairsampleError",
    "InputError",
    "SchemaError",
    "RowError",
    "PlanError",
    "InfeasibleError",
    "TrainingError",
    "ConfigError",
    "SearchError",
    "NotFittedError",
    # dataset
    "Dataset",
    "FeaturePipeline",
    "FeatureSpec",
    "QUADRANT_NAMES",
    "SYNTHETIC_SCHEMA",
    "Schema",
    "SyntheticSpec",
    "generate_synthetic",
    "load_csv",
    "quadrant_counts",
    "stratified_split",
    "write_csv",
    # balance
    "BalanceParams",
    "PRESETS",
    "PRESET_NAMES",
    "QuadrantCounts",
    "RestrictionReport",
    "SamplingPlan",
    "SetupPreset",
    "allowed_interval",
    "apportion",
    "bound_at",
    "check_restrictions",
    "compute_plan",
    "materialize_sample",
    "max_sample_size",
    "preset_plan",
    "quadrant_bounds",
    "sample_indices",
    # metrics
    "ConfusionCounts",
    "DI_ACCEPTABLE",
    "GroupedPredictions",
    "LossWeights",
    "MetricReport",
    "combined_loss",
    "confusion",
    "di_acceptable",
    "di_loss",
    "di_ratio",
    "mcc",
    "mcc_loss",
    "metric_report",
    "render",
    "report_from_counts",
    # classifiers
    "ClassifierSpec",
    "ExternalScoreModel",
    "GaussianNaiveBayes",
    "LinearSVM",
    "LogisticRegression",
    "RandomForest",
    "TrainedModel",
    "build_estimator",
    "classifier_kinds",
    "fit",
    "load_external_scores",
    "predict_labels",
    "register_kind",
    # search
    "EvaluationPoint",
    "GridSpec",
    "ParetoFront",
    "SearchResult",
    "full_search",
    "grid_search_level0",
    "grid_search_level1",
    "inspect_point",
    "pareto_front",
    "point_seed",
    "select_optimal",
]
