"""Masked self-attention stress classifier."""

from .config import (
    ALL_FEATURES,
    FEATURE_MODES,
    PRESETS,
    SYLLABLE_NUCLEUS_NUMERICAL,
    SYLLABLE_NUMERICAL,
    ModelConfig,
    TrainConfig,
    feature_dim,
    large_config,
    medium_config,
)
from .network import (
    Params,
    backward,
    embed,
    forward,
    init_params,
    loss_and_grads,
    loss_from_logits,
    position_weights,
)
from .training import (
    Adam,
    Batch,
    evaluate_batch,
    make_batch,
    predict_instance,
    train,
)

__all__ = [
    "ALL_FEATURES", "FEATURE_MODES", "PRESETS",
    "SYLLABLE_NUCLEUS_NUMERICAL", "SYLLABLE_NUMERICAL",
    "ModelConfig", "TrainConfig", "feature_dim", "large_config",
    "medium_config", "Params", "backward", "embed", "forward",
    "init_params", "loss_and_grads", "loss_from_logits", "position_weights",
    "Adam", "Batch", "evaluate_batch", "make_batch", "predict_instance",
    "train",
]
