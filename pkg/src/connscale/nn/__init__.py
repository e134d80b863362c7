"""A small NHWC CNN engine: layers, model, Adam, training and checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import NumericFault, conv2d, dense, maxpool2x2, relu, softmax, softmax_cross_entropy
from .model import (CONV_LAYERS, ModelConfig, backward, forward, init_params, loss_and_grads,
                    predict)
from .optim import AdamState, adam_step, step_lr
from .train import EvalResult, TrainConfig, TrainingDiverged, TrainReport, evaluate, train

__all__ = [
    "AdamState", "CONV_LAYERS", "CheckpointError", "EvalResult", "ModelConfig", "NumericFault",
    "TrainConfig", "TrainReport", "TrainingDiverged", "adam_step", "backward", "conv2d", "dense",
    "evaluate", "forward", "init_params", "load_checkpoint", "loss_and_grads", "maxpool2x2",
    "predict", "relu", "save_checkpoint", "softmax", "softmax_cross_entropy", "step_lr", "train",
]
