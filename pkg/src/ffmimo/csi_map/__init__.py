from .dataset import CsiDataset, CsiRecord, dataset_from_jsonl, dataset_to_jsonl
from .lqtn import (
    LqtnConfig,
    LqtnModel,
    TrainConfig,
    labels_tensor,
    lqtn_loss,
    model_memory_mb,
    train_lqtn,
)
from .predictors import (
    CsiPredictor,
    IndependentPerRbPredictor,
    KnnPredictor,
    LqtnPredictor,
    OraclePredictor,
    evaluate_mae,
    knn_predict,
)

__all__ = [
    "CsiDataset",
    "CsiRecord",
    "CsiPredictor",
    "IndependentPerRbPredictor",
    "KnnPredictor",
    "LqtnConfig",
    "LqtnModel",
    "LqtnPredictor",
    "OraclePredictor",
    "TrainConfig",
    "dataset_from_jsonl",
    "dataset_to_jsonl",
    "evaluate_mae",
    "knn_predict",
    "labels_tensor",
    "lqtn_loss",
    "model_memory_mb",
    "train_lqtn",
]
