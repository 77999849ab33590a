"""Temporal classifier head: residual causal TCN, then per-AU MLP.

Each TCN block runs two causal dilated convolutions (kernel 3 by
default) with ReLU and a residual connection, 1x1-projected when widths
differ. The MLP maps per-frame features through 512 ReLU units and
dropout to 12 two-way logits; "active" probability is the softmax of
each pair, thresholded at 0.5 (ties count as active).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aufuse import tensor as T
from aufuse.layers import Linear, collect_parameters, fan_in_uniform
from aufuse.tensor import Tensor

NUM_AUS = 12


@dataclass
class TcnConfig:
    kernel: int = 3
    dilations: tuple = (1, 2, 4, 8)
    channels: int = 128

    def __post_init__(self):
        if any(d <= 0 for d in self.dilations):
            raise ValueError(f"dilations must be positive, got {self.dilations}")
        if list(self.dilations) != sorted(set(self.dilations)):
            raise ValueError(f"dilations must be strictly increasing, got {self.dilations}")


def receptive_field(cfg: TcnConfig) -> int:
    """Trailing time steps that can influence one output position."""
    return 1 + sum(2 * (cfg.kernel - 1) * d for d in cfg.dilations)


@dataclass
class AuPrediction:
    probabilities: np.ndarray  # (T, 12) active-class probability
    decisions: np.ndarray  # (T, 12) in {0, 1}


class TcnBlock:
    """Two causal dilated convs with ReLU, plus a residual connection."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, dilation: int, rng: np.random.Generator):
        self.dilation = dilation
        fan1 = kernel * in_ch
        fan2 = kernel * out_ch
        self.w1 = Tensor(fan_in_uniform(rng, (kernel, in_ch, out_ch), fan1), requires_grad=True)
        self.b1 = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)
        self.w2 = Tensor(fan_in_uniform(rng, (kernel, out_ch, out_ch), fan2), requires_grad=True)
        self.b2 = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)
        self.proj = Linear(in_ch, out_ch, rng) if in_ch != out_ch else None

    def __call__(self, x: Tensor) -> Tensor:
        h = T.relu(T.conv1d_causal(x, self.w1, self.dilation) + self.b1)
        h = T.relu(T.conv1d_causal(h, self.w2, self.dilation) + self.b2)
        res = self.proj(x) if self.proj is not None else x
        return h + res

    def parameters(self):
        named = [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]
        if self.proj is not None:
            named.append(("proj", self.proj))
        yield from collect_parameters(named)


class Tcn:
    def __init__(self, in_dim: int, cfg: TcnConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.blocks = []
        ch_in = in_dim
        for d in cfg.dilations:
            self.blocks.append(TcnBlock(ch_in, cfg.channels, cfg.kernel, d, rng))
            ch_in = cfg.channels

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x

    def parameters(self):
        for i, block in enumerate(self.blocks):
            for name, p in block.parameters():
                yield f"block{i}.{name}", p


class MlpHead:
    """Per-frame dense 512-ReLU-dropout stack emitting 12 two-way logits."""

    def __init__(self, in_dim: int, rng: np.random.Generator, hidden: int = 512,
                 num_aus: int = NUM_AUS, dropout: float = 0.3):
        self.num_aus = num_aus
        self.dropout = dropout
        self.fc1 = Linear(in_dim, hidden, rng)
        self.fc2 = Linear(hidden, num_aus * 2, rng)

    def __call__(self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        h = T.relu(self.fc1(x))
        if training and self.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an explicit generator")
            h = T.dropout(h, self.dropout, rng)
        logits = self.fc2(h)
        return T.reshape(logits, (x.shape[0], self.num_aus, 2))

    def parameters(self):
        yield from collect_parameters([("fc1", self.fc1), ("fc2", self.fc2)])


def predict(logits) -> AuPrediction:
    """Per-AU two-way softmax; active probability thresholded at 0.5."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    diff = data[..., 1] - data[..., 0]  # two-way softmax == logistic of the gap
    prob = np.empty_like(diff)
    pos = diff >= 0
    prob[pos] = 1.0 / (1.0 + np.exp(-diff[pos]))
    expd = np.exp(diff[~pos])
    prob[~pos] = expd / (1.0 + expd)
    return AuPrediction(probabilities=prob, decisions=(prob >= 0.5).astype(np.int8))


def au_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean two-way cross-entropy over frames and AUs."""
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:2]:
        raise ValueError(f"labels {labels.shape} do not match logits {logits.shape}")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    flat = T.reshape(logits, (-1, 2))
    return T.cross_entropy(T.softmax(flat), labels.reshape(-1).astype(np.int64))
