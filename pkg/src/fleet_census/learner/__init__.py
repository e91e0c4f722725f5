from .head import (
    ClassifierHead,
    TrainConfig,
    load_head,
    loss_and_grad,
    save_head,
    softmax,
)
from .train import (
    EpochStats,
    TrainingLog,
    dataset_loss_accuracy,
    predict_store,
    train_head,
)

__all__ = [
    "ClassifierHead",
    "TrainConfig",
    "EpochStats",
    "TrainingLog",
    "dataset_loss_accuracy",
    "load_head",
    "loss_and_grad",
    "predict_store",
    "save_head",
    "softmax",
    "train_head",
]
