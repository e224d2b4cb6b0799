from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    Conv2d,
    Dense,
    DownsampleConv,
    InstanceNorm,
    Layer,
    NoForwardError,
    ReLU,
    ResidualBlock,
    Sequential,
    Softmax,
    Standardize,
    Tanh,
    UpsampleConv,
)
from .nets import ClassifierNet, GeneratorNet, generator_depth
from .optim import AdamState, adam_step
from .train import accuracy, train_classifier

__all__ = [
    "AdamState",
    "CheckpointFormatError",
    "ClassifierNet",
    "Conv2d",
    "Dense",
    "DownsampleConv",
    "GeneratorNet",
    "generator_depth",
    "GradCheckReport",
    "InstanceNorm",
    "Layer",
    "NoForwardError",
    "ReLU",
    "ResidualBlock",
    "Sequential",
    "Softmax",
    "Standardize",
    "Tanh",
    "UpsampleConv",
    "accuracy",
    "adam_step",
    "grad_check",
    "load_checkpoint",
    "save_checkpoint",
    "train_classifier",
]
