"""calprompt: offline calibration engine for cloze-prompt classifiers."""

from ._version import __version__
from .core import (
    EPSILON,
    METHODS,
    METRICS,
    TRAINABLE_METHODS,
    CalibrationError,
    CalibratorSpec,
    DimensionError,
    DomainError,
    LabelProbRecord,
    PriorProfile,
    TaskManifest,
    ValidationError,
    apply_cbm,
    apply_cc,
    apply_penalty,
    apply_pmi,
    predict,
    renormalize,
)
from .fewshot import (
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEEDS,
    DEFAULT_SHOT_COUNTS,
    EvalReport,
    GridCell,
    ShotSet,
    SplitMix64,
    TrainConfig,
    run_grid,
    sample_shots,
    train_calibrator,
    train_cc,
    train_penalty,
)
from .metrics import (
    ConfusionMatrix,
    ThresholdCurve,
    accuracy,
    evaluate,
    f1_score,
    macro_f1,
    positive_probabilities,
    score_records,
    threshold_sweep,
)
from .multilingual import (
    DeltaReport,
    GroupStats,
    LanguageInfo,
    compute_deltas,
    group_by_accessibility,
    group_by_family,
    load_language_table,
    load_score_table,
)

__all__ = [
    "__version__",
    "EPSILON", "METHODS", "METRICS", "TRAINABLE_METHODS",
    "CalibrationError", "DimensionError", "DomainError", "ValidationError",
    "LabelProbRecord", "PriorProfile", "TaskManifest", "CalibratorSpec",
    "apply_cc", "apply_pmi", "apply_cbm", "apply_penalty", "predict",
    "renormalize",
    "DEFAULT_EPOCHS", "DEFAULT_LEARNING_RATE", "DEFAULT_SEEDS",
    "DEFAULT_SHOT_COUNTS",
    "TrainConfig", "ShotSet", "SplitMix64", "GridCell", "EvalReport",
    "sample_shots", "train_penalty", "train_cc", "train_calibrator",
    "run_grid",
    "ConfusionMatrix", "ThresholdCurve", "accuracy", "macro_f1", "f1_score",
    "threshold_sweep", "positive_probabilities", "score_records", "evaluate",
    "LanguageInfo", "DeltaReport", "GroupStats", "load_language_table",
    "load_score_table", "compute_deltas", "group_by_accessibility",
    "group_by_family",
]
