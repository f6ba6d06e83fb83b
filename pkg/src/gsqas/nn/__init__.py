"""Small dense-tensor engine: autodiff, layers, losses and Adam."""
from .layers import BatchNorm, Linear, LinearBNReLU, Module, batchnorm, linear, relu, sigmoid, softmax
from .losses import bce_loss, bernoulli_log_likelihood, cross_entropy_loss, gaussian_kl, mse_loss
from .optim import Adam, AdamState, adam_step, adam_update
from .tensor import Tensor, no_grad, parameter

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm",
    "Linear",
    "LinearBNReLU",
    "Module",
    "Tensor",
    "adam_step",
    "adam_update",
    "batchnorm",
    "bce_loss",
    "bernoulli_log_likelihood",
    "cross_entropy_loss",
    "gaussian_kl",
    "linear",
    "mse_loss",
    "no_grad",
    "parameter",
    "relu",
    "sigmoid",
    "softmax",
]
