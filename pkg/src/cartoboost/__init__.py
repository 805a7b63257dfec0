"""Training-dynamics toolkit for finding noisy labels in tabular datasets."""

__version__ = "0.1.0"

from .cartography import TrainingDynamics, compute_dynamics, dynamics_to_report
from .data_io import (
    CartographyPoint,
    CartographyReport,
    Column,
    ColumnSchema,
    Dataset,
    EncodedView,
    apply_encoding,
    fit_encoding,
    load_csv,
    load_dataset,
    read_report,
    save_dataset,
    write_report,
)
from .detection import (
    DetectionResult,
    WeightCollapseError,
    WeightTrajectory,
    auto_valley_threshold,
    detect_by_product,
    detect_by_weight,
    heuristic_long_confidence,
    heuristic_low_probability,
    heuristic_short_confidence,
    learn_weights,
    validation_threshold_search,
)
from .evaluation import (
    ClassificationScore,
    DetectionScore,
    ExperimentReport,
    SearchSpace,
    classification_score,
    detection_score,
    pr_auc,
    random_search_tune,
    run_experiment,
)
from .gbdt import (
    Ensemble,
    ModelFormatError,
    TrainConfig,
    Tree,
    deserialize,
    fit,
    load_model,
    predict,
    predict_proba,
    predict_proba_at,
    save_model,
    serialize,
    staged_predictions,
    staged_scores,
    weighted_log_loss,
)
from .noise import (
    SplitSpec,
    gen_binary_synthetic,
    gen_multiclass_synthetic,
    inject_ncar,
    inject_nnar,
    stratified_split,
)
