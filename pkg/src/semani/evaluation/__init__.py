from semani.evaluation.classifier import (
    ClassifierCheckpoint,
    ClassifierModel,
    N_CLASSES,
    class_index,
    class_label,
    train_classifier,
)
from semani.evaluation.metrics import (
    clip_score,
    inception_score,
    l2_error,
    rank_of_positive,
    recall_at_n,
)
from semani.evaluation.suite import (
    ALL_PHRASES,
    EvalReport,
    alignment_report,
    run_suite,
)

__all__ = [
    "ALL_PHRASES",
    "ClassifierCheckpoint",
    "ClassifierModel",
    "EvalReport",
    "N_CLASSES",
    "alignment_report",
    "class_index",
    "class_label",
    "clip_score",
    "inception_score",
    "l2_error",
    "rank_of_positive",
    "recall_at_n",
    "run_suite",
    "train_classifier",
]
