"""Training side of the trajectory-prediction anomaly detector.

Fits the CVAE predictor on normal-only track windows and exports weight
containers the inference engine loads byte-for-byte.
"""

from .model import (
    BiTrapLite,
    future_offsets,
    gaussian_kl,
    history_features,
    load_container_into,
    to_container,
)
from .train import (
    LogEntry,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    export_weights,
    split_train_val,
    train,
    training_loss,
    windows_to_arrays,
    write_log,
)

__version__ = "0.1.0"

__all__ = [
    "BiTrapLite",
    "future_offsets",
    "gaussian_kl",
    "history_features",
    "load_container_into",
    "to_container",
    "LogEntry",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "export_weights",
    "split_train_val",
    "train",
    "training_loss",
    "windows_to_arrays",
    "write_log",
]
