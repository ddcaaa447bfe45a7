"""Small trainable blocks built on the autodiff primitives."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import Rng


def sinusoidal_embed(t, dim: int, scale: float = 1000.0) -> np.ndarray:
    """Interleaved ``[sin, cos]`` encoding of a scalar (or array of scalars).

    ``t`` is multiplied by ``scale`` so that values on a 1/1000 grid map to
    distinct vectors.  The result has shape ``np.shape(t) + (dim,)``.
    """
    if dim % 2:
        raise ValueError(f"embedding width must be even, got {dim}")
    t = np.asarray(t, dtype=np.float64)
    freqs = np.power(10000.0, -np.arange(0, dim, 2, dtype=np.float64) / dim)
    angles = scale * t[..., None] * freqs
    out = np.empty(t.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


class Module:
    """Parameter container; subclasses register Tensors and child modules as attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(rng: Rng, shape, scale: float) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: Rng, bias: bool = True, init_scale: float | None = None):
        scale = init_scale if init_scale is not None else 1.0 / np.sqrt(n_in)
        self.weight = _param(rng, (n_in, n_out), scale)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x) -> Tensor:
        y = ad.matmul(x, self.weight)
        return ad.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.shift = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x) -> Tensor:
        return ad.layer_norm(x, self.gain, self.shift)


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: Rng):
        self.table = _param(rng, (n, dim), 1.0)

    def __call__(self, ids) -> Tensor:
        return ad.gather(self.table, ids)


class SelfAttention(Module):
    """Multi-head self-attention with an optional key-padding mask."""

    def __init__(self, dim: int, heads: int, rng: Rng):
        if dim % heads:
            raise ValueError(f"model width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def __call__(self, x, key_mask: np.ndarray | None = None) -> Tensor:
        b, n, d = x.shape
        h, dh = self.heads, d // self.heads
        qkv = ad.reshape(self.qkv(x), (b, n, 3, h, dh))
        qkv = ad.transpose(qkv, (2, 0, 3, 1, 4))  # 3, b, h, n, dh
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        if key_mask is not None:
            # key_mask: (b, n) True where the key is valid
            scores = ad.add(scores, np.where(key_mask, 0.0, -1e9)[:, None, None, :])
        attn = ad.softmax(scores, axis=-1)
        out = ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3))
        return self.proj(ad.reshape(out, (b, n, d)))


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: Rng):
        self.up = Linear(dim, hidden, rng)
        self.down = Linear(hidden, dim, rng)

    def __call__(self, x) -> Tensor:
        return self.down(ad.gelu(self.up(x)))


class TransformerBlock(Module):
    """Pre-norm block: ``x + attn(norm(x))`` then ``x + ffn(norm(x))``."""

    def __init__(self, dim: int, heads: int, ffn_width: int, rng: Rng):
        self.norm1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_width, rng)

    def __call__(self, x, key_mask: np.ndarray | None = None) -> Tensor:
        x = ad.add(x, self.attn(self.norm1(x), key_mask))
        return ad.add(x, self.ffn(self.norm2(x)))


class TransformerStack(Module):
    """Stack of blocks, optionally with U-Net style skips between symmetric layers.

    With skips on, the output of layer ``i`` in the first half is concatenated
    channel-wise with the input of layer ``L-1-i`` and merged by a linear layer.
    """

    def __init__(self, dim: int, layers: int, heads: int, ffn_width: int, rng: Rng, skips: bool = True):
        if skips and layers % 2:
            raise ValueError(f"skip connections need an even layer count, got {layers}")
        self.skips = skips
        self.blocks = [TransformerBlock(dim, heads, ffn_width, rng) for _ in range(layers)]
        self.combiners = [Linear(2 * dim, dim, rng) for _ in range(layers // 2)] if skips else []
        self.norm = LayerNorm(dim)

    def __call__(self, x, key_mask: np.ndarray | None = None, ablate: int | None = None) -> Tensor:
        """``ablate`` zeroes the output of one first-half layer (wiring diagnostics)."""
        n = len(self.blocks)
        saved = []
        for i, block in enumerate(self.blocks):
            if self.skips and i >= n // 2:
                j = n - 1 - i
                x = self.combiners[j](ad.concat([x, saved[j]], axis=-1))
            x = block(x, key_mask)
            if ablate == i:
                x = ad.mul(x, 0.0)
            if self.skips and i < n // 2:
                saved.append(x)
        return self.norm(x)
