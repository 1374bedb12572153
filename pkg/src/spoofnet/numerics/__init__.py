"""Dense float64 tensor engine with reverse-mode autodiff and Adam."""

from .nn import BatchNorm, Conv1d, Conv2d, Linear, Module, parameter
from .ops import (batchnorm, conv1d, conv2d, dropout, linear, log_softmax,
                  maxpool2d, pad, selu, softmax, weighted_cross_entropy)
from .optim import Adam, AdamState, adam_step
from .tensor import (Tensor, as_tensor, concat, maximum, no_grad, stack,
                     topological_order, where)

__all__ = [
    "Adam", "AdamState", "BatchNorm", "Conv1d", "Conv2d", "Linear", "Module",
    "Tensor", "adam_step", "as_tensor", "batchnorm", "concat", "conv1d",
    "conv2d", "dropout", "linear", "log_softmax", "maximum", "maxpool2d",
    "no_grad", "pad", "parameter", "selu", "softmax", "stack",
    "topological_order", "weighted_cross_entropy", "where",
]
