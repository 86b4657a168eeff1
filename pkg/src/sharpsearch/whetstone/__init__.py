"""Sharpenable (Whetstone-style) networks in NumPy."""

from .activations import SharpenableActivation, activation_backward, activation_forward
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    GaussianNoise,
    MaxPool2D,
    batchnorm_backward,
    batchnorm_forward,
    noise_forward,
)
from .network import (
    BatchNormSpec,
    ConvSpec,
    EpochRecord,
    History,
    Network,
    NetworkSpec,
    build_network,
    dead_neuron_fraction,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .optim import OptimizerState, adadelta_step, rmsprop_step
from .population import OutputKey, make_output_key, population_logits, population_loss, softmax
from .schedule import (
    AdaptiveSharpener,
    ScheduleVerdict,
    SharpeningSchedule,
    adaptive_sharpener_step,
    schedule_sharpness,
    validate_schedule,
)

__all__ = [
    "BatchNorm",
    "Conv2D",
    "Dense",
    "GaussianNoise",
    "MaxPool2D",
    "batchnorm_backward",
    "batchnorm_forward",
    "noise_forward",
    "BatchNormSpec",
    "ConvSpec",
    "EpochRecord",
    "History",
    "Network",
    "NetworkSpec",
    "build_network",
    "dead_neuron_fraction",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "AdaptiveSharpener",
    "ScheduleVerdict",
    "SharpeningSchedule",
    "adaptive_sharpener_step",
    "schedule_sharpness",
    "validate_schedule",
    "SharpenableActivation",
    "activation_backward",
    "activation_forward",
    "OptimizerState",
    "adadelta_step",
    "rmsprop_step",
    "OutputKey",
    "make_output_key",
    "population_logits",
    "population_loss",
    "softmax",
]
