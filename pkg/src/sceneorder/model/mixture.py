"""Discretised mixture of logistics over a uniform grid on [-1, 1].

The outermost bins absorb the tails, so the bin probabilities of every
mixture sum to one exactly (up to rounding).
"""
from __future__ import annotations

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor


def bin_index(h: np.ndarray, n_bins: int) -> np.ndarray:
    idx = np.floor((np.asarray(h, dtype=float) + 1.0) * 0.5 * n_bins).astype(int)
    return np.clip(idx, 0, n_bins - 1)


def bin_center(idx, n_bins: int) -> np.ndarray:
    return -1.0 + (np.asarray(idx) + 0.5) * (2.0 / n_bins)


def scales(log_scale: Tensor, floor: float) -> Tensor:
    return nx.exp(log_scale) + floor


def component_log_prob(h_idx: np.ndarray, mu: Tensor, scale: Tensor, n_bins: int) -> Tensor:
    """log P(bin | component) for integer bins ``h_idx`` broadcast against (..., K)."""
    width = 2.0 / n_bins
    lower = -1.0 + h_idx[..., None] * width
    upper = lower + width
    inv = 1.0 / scale
    a = (lower - mu) * inv
    b = (upper - mu) * inv
    first = (h_idx == 0)[..., None]
    last = (h_idx == n_bins - 1)[..., None]
    interior = nx.log_sigmoid(b) + nx.log_sigmoid(-a) + nx.log1mexp(inv * width)
    lp = nx.where(first, nx.log_sigmoid(b), interior)
    return nx.where(last, nx.log_sigmoid(-a), lp)


def log_prob(h: np.ndarray, logits: Tensor, mu: Tensor, log_scale: Tensor,
             n_bins: int = 256, scale_floor: float = 1e-3) -> Tensor:
    """Log probability of the bin containing each ``h``; parameters are (..., K)."""
    idx = bin_index(h, n_bins)
    comp = component_log_prob(idx, mu, scales(log_scale, scale_floor), n_bins)
    return nx.logsumexp(nx.log_softmax(logits, axis=-1) + comp, axis=-1)


def bin_probabilities(logits, mu, log_scale, n_bins: int = 256, scale_floor: float = 1e-3) -> np.ndarray:
    """All bin probabilities for a single mixture (K,) → (n_bins,), plain numpy."""
    logits, mu, log_scale = (np.asarray(x, dtype=float) for x in (logits, mu, log_scale))
    edges = -1.0 + np.arange(1, n_bins) * (2.0 / n_bins)
    s = np.exp(log_scale) + scale_floor
    cdf = 0.5 * (1.0 + np.tanh(0.5 * (edges[:, None] - mu) / s))
    cdf = np.concatenate([np.zeros((1, len(mu))), cdf, np.ones((1, len(mu)))])
    w = np.exp(logits - logits.max())
    w /= w.sum()
    return np.diff(cdf, axis=0) @ w


def logistic_density(x, mu: float, scale: float) -> np.ndarray:
    z = np.exp(-(np.asarray(x, dtype=float) - mu) / scale)
    return z / (scale * (1.0 + z) ** 2)


def sample(logits: np.ndarray, mu: np.ndarray, log_scale: np.ndarray, rng: np.random.Generator,
           scale_floor: float = 1e-3) -> np.ndarray:
    """Draw one value per mixture (leading dims), clipped to [-1, 1].

    A component is chosen by its weight, then the logistic inverse CDF
    ``mu + s * log(u / (1 - u))`` is applied.
    """
    logits = np.asarray(logits, dtype=float)
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    w /= w.sum(axis=-1, keepdims=True)
    flat_w = w.reshape(-1, w.shape[-1])
    comp = np.array([rng.choice(len(p), p=p) for p in flat_w]).reshape(w.shape[:-1])
    m = np.take_along_axis(np.asarray(mu), comp[..., None], -1)[..., 0]
    s = np.exp(np.take_along_axis(np.asarray(log_scale), comp[..., None], -1)[..., 0]) + scale_floor
    u = rng.uniform(1e-12, 1.0 - 1e-12, size=m.shape)
    return np.clip(m + s * (np.log(u) - np.log1p(-u)), -1.0, 1.0)
