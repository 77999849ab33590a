"""Shared learnable layers: linear maps and layer-norm parameter holders.

Initialization convention across the project: fan-in-scaled uniform
weights, zero biases, gamma=1 / beta=0 for norms.
"""

from __future__ import annotations

import numpy as np

from aufuse import tensor as T
from aufuse.tensor import Tensor


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear:
    """Affine map x @ W + b applied to the last axis."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias=True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Tensor(fan_in_uniform(rng, (in_dim, out_dim), in_dim), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=np.float32), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = T.reshape(x, (-1, self.in_dim)) if x.data.ndim != 2 else x
        out = T.matmul(flat, self.weight)
        if self.bias is not None:
            out = out + self.bias
        if x.data.ndim != 2:
            out = T.reshape(out, (*lead, self.out_dim))
        return out

    def parameters(self):
        yield "weight", self.weight
        if self.bias is not None:
            yield "bias", self.bias


class LayerNorm:
    """Learned gamma/beta around the layer_norm op (last-axis normalization)."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, eps=self.eps)

    def parameters(self):
        yield "gamma", self.gamma
        yield "beta", self.beta


def collect_parameters(named_children) -> list[tuple[str, Tensor]]:
    """Flatten (prefix, module-or-tensor) pairs into dotted parameter names."""
    out: list[tuple[str, Tensor]] = []
    for prefix, child in named_children:
        if isinstance(child, Tensor):
            out.append((prefix, child))
        else:
            for name, p in child.parameters():
                out.append((f"{prefix}.{name}", p))
    return out
