from .core import (
    Buffer,
    Layer,
    Parameter,
    Sequential,
    Tape,
    model_backward,
    model_forward,
    rng_for,
)
from . import layers, losses, optim, gradcheck, checkpoint

__all__ = [
    "Buffer",
    "Layer",
    "Parameter",
    "Sequential",
    "Tape",
    "model_backward",
    "model_forward",
    "rng_for",
    "layers",
    "losses",
    "optim",
    "gradcheck",
    "checkpoint",
]
