"""Belief-map regressor: network, meta-loss training and inference."""
from .network import GraspNet, NetworkConfig, forward, image_to_tensor, parameter_count
from .training import (
    EpochRecord,
    Prediction,
    TrainConfig,
    TrainResult,
    backward,
    evaluate_model,
    evaluate_preprocessed,
    parameter_checksum,
    predict,
    predict_from_maps,
    predict_maps,
    sgd_step,
    train,
)

__all__ = [
    "GraspNet", "NetworkConfig", "forward", "image_to_tensor", "parameter_count",
    "EpochRecord", "Prediction", "TrainConfig", "TrainResult", "backward",
    "evaluate_model", "evaluate_preprocessed", "parameter_checksum", "predict",
    "predict_from_maps", "predict_maps", "sgd_step", "train",
]
