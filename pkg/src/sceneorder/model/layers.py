"""Parameter containers and transformer building blocks."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor


class Module:
    """Holds parameters and sub-modules as attributes, discovered in definition order."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _normal(rng, shape, std):
    return nx.parameter(rng.normal(0.0, std, size=shape))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float = 0.02, bias: bool = True):
        self.weight = _normal(rng, (d_in, d_out), std)
        self.bias = nx.parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = nx.parameter(np.ones(dim))
        self.beta = nx.parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return nx.layer_norm(x) * self.gamma + self.beta


class Dropout(Module):
    def __init__(self, p: float):
        self.p = p
        self.rng: np.random.Generator | None = None

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.p <= 0.0:
            return x
        return nx.dropout(x, self.p, self.rng, training=True)


class SelfAttention(Module):
    def __init__(self, dim: int, heads: int, dropout: float, rng, out_std: float):
        if dim % heads:
            raise ValueError(f"hidden size {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng, std=out_std)
        self.drop = Dropout(dropout)

    def __call__(self, x: Tensor, causal: bool) -> Tensor:
        b, n, d = x.shape
        h, dh = self.heads, d // self.heads
        qkv = self.qkv(x).reshape(b, n, 3, h, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ nx.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
        if causal:
            scores = nx.masked_fill(scores, np.triu(np.ones((n, n), dtype=bool), 1), -np.inf)
        att = nx.softmax(scores, axis=-1)
        out = (att @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
        return self.drop(self.proj(out))


class Block(Module):
    """Pre-LN transformer block with a GeLU MLP."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, dropout: float, rng, n_layers: int):
        out_std = 0.02 / math.sqrt(2 * n_layers)
        self.ln1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, dropout, rng, out_std)
        self.ln2 = LayerNorm(dim)
        self.fc1 = Linear(dim, mlp_ratio * dim, rng)
        self.fc2 = Linear(mlp_ratio * dim, dim, rng, std=out_std)
        self.drop = Dropout(dropout)

    def __call__(self, x: Tensor, causal: bool = False) -> Tensor:
        x = x + self.attn(self.ln1(x), causal)
        return x + self.drop(self.fc2(nx.gelu(self.fc1(self.ln2(x)))))


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    freq = np.exp(-math.log(10000.0) * np.arange(0, dim, 2) / dim)
    out = np.zeros((n, dim))
    out[:, 0::2] = np.sin(pos * freq)
    out[:, 1::2] = np.cos(pos * freq)
    return out
