"""Parameterised building blocks on top of :mod:`cuberl.nn.tensor`."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Base class: parameters are the :class:`Tensor` attributes and submodules."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data = np.asarray(state[k], dtype=p.dtype).copy()


def _param(data: np.ndarray, dtype) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


class Linear(Module):
    """Affine layer; weights uniform with variance ``gain**2 / n_in``, zero bias."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32,
                 gain: float = np.sqrt(2.0)):
        bound = gain * np.sqrt(3.0 / n_in)
        self.W = _param(rng.uniform(-bound, bound, size=(n_in, n_out)), dtype)
        self.b = _param(np.zeros(n_out), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.W, self.b)


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator, dtype=np.float32):
        self.table = _param(rng.normal(0.0, 1.0, size=(n, dim)) / np.sqrt(dim), dtype)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return T.take_rows(self.table, ids)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32):
        self.gain = _param(np.ones(dim), dtype)
        self.bias = _param(np.zeros(dim), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)


class MLP(Module):
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, dtype=np.float32):
        self.layers = [Linear(a, b, rng, dtype) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.relu(x)
        return x


class MultiHeadAttention(Module):
    """Unmasked scaled dot-product self-attention over every position."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, dtype=np.float32):
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.qkv = Linear(d_model, 3 * d_model, rng, dtype, gain=1.0)
        self.out = Linear(d_model, d_model, rng, dtype, gain=1.0)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ValueError(f"attention expects (batch, positions, d_model), got {x.shape}")
        b, m, d = x.shape
        h, dk = self.n_heads, d // self.n_heads
        qkv = self.qkv(x).reshape(b, m, 3, h, dk).transpose(2, 0, 3, 1, 4)  # 3,b,h,m,dk
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = T.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dk))
        weights = T.softmax(scores, axis=-1)
        ctx = T.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, m, d)
        return self.out(ctx)


def attention(x: Tensor, block: MultiHeadAttention) -> Tensor:
    return block(x)


class EncoderLayer(Module):
    """Post-norm transformer encoder block."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator, dtype=np.float32):
        self.attn = MultiHeadAttention(d_model, n_heads, rng, dtype)
        self.norm1 = LayerNorm(d_model, dtype)
        self.ff = MLP([d_model, d_ff, d_model], rng, dtype)
        self.norm2 = LayerNorm(d_model, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ff(x))
