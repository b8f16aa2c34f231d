from polypvid.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from polypvid.model.loss import l2_loss
from polypvid.model.network import (
    ModelConfig,
    TemporalEncoderDecoder,
    build_model,
    count_trainable_parameters,
)
from polypvid.model.training import TrainConfig, lr_at, model_from_checkpoint, train

__all__ = [
    "Checkpoint",
    "ModelConfig",
    "TemporalEncoderDecoder",
    "TrainConfig",
    "build_model",
    "count_trainable_parameters",
    "l2_loss",
    "load_checkpoint",
    "lr_at",
    "model_from_checkpoint",
    "save_checkpoint",
    "train",
]
