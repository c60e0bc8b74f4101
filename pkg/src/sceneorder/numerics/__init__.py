"""Float64 tensors with reverse-mode autodiff, AdamW, and checkpoint I/O."""
from .tensor import (Tensor, ShapeError, no_grad, is_grad_enabled, parameter, as_tensor,
                     add, sub, mul, div, neg, power, matmul, exp, log, tanh, sigmoid,
                     log_sigmoid, log1mexp, relu, gelu, clamp_min, reduce_sum, reduce_mean,
                     softmax, log_softmax, logsumexp, layer_norm, dropout, reshape, transpose,
                     swapaxes, getitem, concat, stack, expand_dims, broadcast_to, embedding,
                     take_along_axis, where, masked_fill)
from .optim import AdamW
from .gradcheck import check_gradients, numerical_grad, relative_error
from . import checkpoint

__all__ = [name for name in dir() if not name.startswith("_")]
