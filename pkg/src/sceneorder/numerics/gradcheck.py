"""Central finite-difference checks for scalar functions of tensors."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def numerical_grad(f: Callable[[], Tensor], x: Tensor, h: float = 1e-4,
                   entries: Sequence[tuple] | None = None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x`` (all entries or a subset)."""
    grad = np.zeros_like(x.data)
    idx_list = entries if entries is not None else list(np.ndindex(x.shape))
    for idx in idx_list:
        orig = x.data[idx]
        x.data[idx] = orig + h
        fp = float(f().data)
        x.data[idx] = orig - h
        fm = float(f().data)
        x.data[idx] = orig
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def check_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-4) -> float:
    """Worst relative error between analytic and numerical gradients over ``inputs``."""
    for x in inputs:
        x.grad = None
    f().backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]
    worst = 0.0
    for x, a in zip(inputs, analytic):
        worst = max(worst, relative_error(a, numerical_grad(f, x, h)))
    return worst
