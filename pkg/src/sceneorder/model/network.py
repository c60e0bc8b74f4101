"""Layout encoder, causal decoder, attribute heads and the sequence NLL."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor
from .config import ModelConfig
from .encoding import geometry_features
from .layers import Block, Dropout, LayerNorm, Linear, Module, sinusoidal_positions
from . import mixture


class LayoutEncoder(Module):
    """Small vision transformer mapping a binary floor mask to a start token."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.patch_size = cfg.vit_patch
        self.resolution = cfg.mask_resolution
        n_patches = (cfg.mask_resolution // cfg.vit_patch) ** 2
        self.patch = Linear(cfg.vit_patch ** 2, cfg.vit_dim, rng)
        self.cls = nx.parameter(rng.normal(0.0, 0.02, size=(1, 1, cfg.vit_dim)))
        self.pos = nx.parameter(rng.normal(0.0, 0.02, size=(n_patches + 1, cfg.vit_dim)))
        self.drop = Dropout(cfg.dropout)
        self.blocks = [Block(cfg.vit_dim, cfg.vit_heads, cfg.vit_mlp_ratio, cfg.dropout, rng, cfg.vit_layers)
                       for _ in range(cfg.vit_layers)]
        self.ln = LayerNorm(cfg.vit_dim)
        self.out = Linear(cfg.vit_dim, cfg.token_dim, rng)

    def __call__(self, masks: np.ndarray) -> Tensor:
        masks = np.asarray(masks, dtype=float)
        r, p = self.resolution, self.patch_size
        if masks.ndim == 2:
            masks = masks[None]
        if masks.shape[1:] != (r, r):
            raise ValueError(f"layout mask must be {r}x{r}, got {masks.shape[1:]}")
        b, g = masks.shape[0], r // p
        patches = masks.reshape(b, g, p, g, p).transpose(0, 1, 3, 2, 4).reshape(b, g * g, p * p)
        x = self.patch(Tensor(patches))
        x = nx.concat([nx.broadcast_to(self.cls, (b, 1, self.cls.shape[-1])), x], axis=1) + self.pos
        x = self.drop(x)
        for blk in self.blocks:
            x = blk(x)
        return self.out(self.ln(x)[:, 0])


@dataclass
class Batch:
    """Ordered scenes padded to a common length.

    ``classes`` and ``attrs`` list objects in generation order; entries at or
    beyond ``lengths[b]`` are padding.
    """
    masks: np.ndarray      # (B, R, R)
    classes: np.ndarray    # (B, N) int
    attrs: np.ndarray      # (B, N, 7) normalised to [-1, 1]
    lengths: np.ndarray    # (B,)

    @property
    def size(self) -> int:
        return len(self.lengths)

    def valid(self) -> np.ndarray:
        return np.arange(self.classes.shape[1])[None, :] < self.lengths[:, None]


@dataclass
class Corruption:
    input_classes: np.ndarray
    masked: np.ndarray


def corrupt(classes: np.ndarray, n_classes: int, mask_rate: float, noise_rate: float,
            rng: np.random.Generator | None) -> Corruption:
    """Choose tokens to replace by [MASK] and teacher-forced labels to randomise.

    Returns new arrays; the caller's targets are left untouched.
    """
    classes = np.asarray(classes)
    if not (0.0 <= mask_rate <= 1.0 and 0.0 <= noise_rate <= 1.0):
        raise ValueError("corruption rates must lie in [0, 1]")
    if (mask_rate == 0.0 and noise_rate == 0.0) or rng is None:
        return Corruption(classes.copy(), np.zeros(classes.shape, dtype=bool))
    masked = rng.random(classes.shape) < mask_rate
    noisy = rng.random(classes.shape) < noise_rate
    random_classes = rng.integers(0, n_classes, size=classes.shape)
    return Corruption(np.where(noisy, random_classes, classes), masked)


@dataclass
class LossResult:
    total: Tensor
    class_nll: float
    geometry_nll: float
    accuracy: float
    n_objects: int


class SceneModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.class_embedding = nx.parameter(rng.normal(0.0, 0.5, size=(cfg.n_classes, cfg.class_dim)))
        self.mask_token = nx.parameter(rng.normal(0.0, 0.5, size=(cfg.token_dim,)))
        self.layout = LayoutEncoder(cfg, rng)
        self.input_proj = Linear(cfg.token_dim, cfg.hidden, rng)
        self.drop = Dropout(cfg.dropout)
        self.blocks = [Block(cfg.hidden, cfg.heads, cfg.mlp_ratio, cfg.dropout, rng, cfg.layers)
                       for _ in range(cfg.layers)]
        self.ln_f = LayerNorm(cfg.hidden)
        self.class_head = Linear(cfg.hidden, cfg.n_classes + 1, rng)
        self.geo_hidden = Linear(cfg.hidden + cfg.class_dim, cfg.geometry_hidden, rng)
        self.geo_out = Linear(cfg.geometry_hidden, 7 * 3 * cfg.mixture_k, rng)
        self.positions = sinusoidal_positions(cfg.max_len + 1, cfg.hidden)

    @property
    def end_class(self) -> int:
        return self.cfg.n_classes

    def set_rng(self, rng: np.random.Generator | None):
        """Generator used by every dropout layer while training."""
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    # -- pieces ------------------------------------------------------------------------
    def object_tokens(self, classes: np.ndarray, attrs: np.ndarray, masked: np.ndarray | None = None) -> Tensor:
        """(B, N) classes and (B, N, 7) normalised attributes to (B, N, 512) tokens."""
        emb = nx.embedding(self.class_embedding, classes)
        tok = nx.concat([emb, Tensor(geometry_features(np.asarray(attrs, dtype=float)))], axis=-1)
        if masked is not None and masked.any():
            tok = nx.where(masked[..., None], self.mask_token, tok)
        return tok

    def decode(self, tokens: Tensor) -> Tensor:
        """Causal context for every position of a (B, L, 512) token sequence."""
        n = tokens.shape[1]
        if n > self.cfg.max_len + 1:
            raise ValueError(f"sequence of {n} tokens exceeds the maximum of {self.cfg.max_len + 1}")
        x = self.drop(self.input_proj(tokens) + self.positions[:n])
        for blk in self.blocks:
            x = blk(x, causal=True)
        return self.ln_f(x)

    def class_logits(self, ctx: Tensor) -> Tensor:
        return self.class_head(ctx)

    def geometry_params(self, ctx: Tensor, classes: np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
        """Mixture weight logits, means and log-scales, each (..., 7, K)."""
        k = self.cfg.mixture_k
        cond = nx.concat([ctx, nx.embedding(self.class_embedding, classes)], axis=-1)
        raw = self.geo_out(nx.gelu(self.geo_hidden(cond)))
        raw = raw.reshape(raw.shape[:-1] + (7, 3, k))
        return raw[..., 0, :], raw[..., 1, :], raw[..., 2, :]

    def start_tokens(self, masks: np.ndarray) -> Tensor:
        """Encode each distinct mask once and scatter the tokens back to the batch."""
        masks = np.ascontiguousarray(masks, dtype=float)
        slot: dict[bytes, int] = {}
        inverse = np.array([slot.setdefault(m.tobytes(), len(slot)) for m in masks])
        if len(slot) == len(masks):
            return self.layout(masks)
        first = np.array([int(np.flatnonzero(inverse == k)[0]) for k in range(len(slot))])
        return self.layout(masks[first])[inverse]

    def sequence_tokens(self, batch: Batch, corruption: Corruption | None = None) -> Tensor:
        start = self.start_tokens(batch.masks).reshape(batch.size, 1, self.cfg.token_dim)
        if batch.classes.shape[1] == 0:
            return start
        classes = batch.classes if corruption is None else corruption.input_classes
        masked = None if corruption is None else corruption.masked
        return nx.concat([start, self.object_tokens(classes, batch.attrs, masked)], axis=1)

    # -- loss ----------------------------------------------------------------------------
    def nll(self, batch: Batch, rng: np.random.Generator | None = None, corrupt_inputs: bool = True) -> LossResult:
        """Teacher-forced sequence NLL, summed per scene and averaged over the batch."""
        cfg = self.cfg
        b, n = batch.classes.shape
        corruption = None
        if corrupt_inputs and self.training:
            corruption = corrupt(batch.classes, cfg.n_classes, cfg.mask_rate, cfg.noise_rate, rng)
        ctx = self.decode(self.sequence_tokens(batch, corruption))          # (B, N+1, H)

        targets = np.full((b, n + 1), self.end_class)
        targets[:, :n] = np.where(batch.valid(), batch.classes, self.end_class)
        live = np.arange(n + 1)[None, :] <= batch.lengths[:, None]
        logp = nx.log_softmax(self.class_logits(ctx), axis=-1)
        picked = nx.take_along_axis(logp, targets[..., None], axis=-1).reshape(b, n + 1)
        class_nll = -(picked * live).sum()
        accuracy = float(((logp.data.argmax(-1) == targets) & live).sum() / live.sum())

        total = class_nll
        geo_value = 0.0
        if n:
            valid = batch.valid()
            cond = np.where(valid, batch.classes, 0)
            logits, mu, log_scale = self.geometry_params(ctx[:, :n], cond)
            lp = mixture.log_prob(batch.attrs, logits, mu, log_scale, cfg.n_bins, cfg.scale_floor)
            geo_nll = -(lp * valid[..., None]).sum()
            geo_value = float(geo_nll.data)
            total = total + geo_nll
        total = total * (1.0 / b)
        return LossResult(total, float(class_nll.data) / b, geo_value / b, accuracy, int(batch.lengths.sum()))
