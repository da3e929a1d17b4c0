"""Training and oracle tooling around the veilboost model schema."""

from .oracle import load_document, oracle_predict, validate_accuracy
from .trainer import DatasetSplit, split_rows, train_export

__all__ = [
    "DatasetSplit",
    "split_rows",
    "train_export",
    "load_document",
    "oracle_predict",
    "validate_accuracy",
]
