"""Graduation prediction from raw timestamped student event streams."""

from .baseline import LogRegModel, chi_square_select, logreg_predict, logreg_train, sigmoid
from .encoding import (
    EncodedSequence,
    bow_featurize,
    discretize_deltas,
    encode_sequence,
    pre_pad_batch,
    truncate_to_week,
)
from .evaluation import RocResult, cross_validate_weekly, roc_auc, stratified_kfold
from .events import (
    DatasetStats,
    Event,
    StudentRecord,
    Vocabulary,
    dataset_stats,
    derive_label,
    filter_pre_enrollment,
    parse_event_log,
)
from .model import GritNetModel, backward, bce_loss, forward, init_for_vocab, init_model, predict, sgd_train

__version__ = "0.1.0"

__all__ = [
    "backward",
    "bce_loss",
    "bow_featurize",
    "chi_square_select",
    "cross_validate_weekly",
    "dataset_stats",
    "DatasetStats",
    "derive_label",
    "discretize_deltas",
    "encode_sequence",
    "EncodedSequence",
    "Event",
    "filter_pre_enrollment",
    "forward",
    "GritNetModel",
    "init_for_vocab",
    "init_model",
    "logreg_predict",
    "logreg_train",
    "LogRegModel",
    "parse_event_log",
    "pre_pad_batch",
    "predict",
    "roc_auc",
    "RocResult",
    "sgd_train",
    "sigmoid",
    "stratified_kfold",
    "StudentRecord",
    "truncate_to_week",
    "Vocabulary",
]
