"""Cross-modal alignment and multi-scale windowed-attention fusion.

Audio embeddings at 100 Hz are mean-pooled onto the video timeline,
both streams are pooled into a temporal scale pyramid, each scale runs
windowed self-attention per modality, and the scales recombine as
sum_i (alpha_i * A_i(t) + beta_i * V_i(t)) with learned scalar weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from aufuse import tensor as T
from aufuse.layers import Linear
from aufuse.tensor import Tensor
from aufuse.views import EmbeddingSequence

DEFAULT_FACTORS = (1, 2, 4)
DEFAULT_WINDOW = 8  # positions per scale; context in base frames is window * factor


@dataclass
class AlignedPair:
    audio: Tensor  # (T, D)
    visual: Tensor  # (T, D)
    frame_rate: float


@dataclass
class ScaleSet:
    audio: list  # Tensor per scale, length ceil(T / factor)
    visual: list
    factors: tuple
    base_len: int


def align_modalities(audio_seq: EmbeddingSequence, visual_seq: EmbeddingSequence, fps: float) -> AlignedPair:
    """Pool 100 Hz audio embeddings onto the video timeline.

    When fps divides 100 this is exact group-mean pooling (fps=25 pools
    groups of 4); otherwise audio rows are linearly interpolated at the
    video frame times. Lengths truncate to the common minimum.
    """
    if audio_seq.vectors.shape[0] == 0 or visual_seq.vectors.shape[0] == 0:
        raise ValueError("cannot align empty embedding sequences")
    audio = audio_seq.vectors
    if fps >= 1 and fps == int(fps) and 100 % int(fps) == 0:
        pooled = T.group_mean(audio, 100 // int(fps))
    else:
        t_a = audio.shape[0]
        pos = (np.arange(visual_seq.vectors.shape[0]) + 0.5) * (100.0 / fps) - 0.5
        pooled = _linear_rows(audio, np.clip(pos, 0.0, t_a - 1.0))
    t_common = min(pooled.shape[0], visual_seq.vectors.shape[0])
    return AlignedPair(
        audio=_truncate(pooled, t_common),
        visual=_truncate(visual_seq.vectors, t_common),
        frame_rate=fps,
    )


def _truncate(x: Tensor, length: int) -> Tensor:
    if x.shape[0] == length:
        return x
    # slicing as an op: grad of dropped rows is zero
    data = x.data[:length]

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[:length] = g
        return (dx,)

    return T.make_op(data, (x,), backward, "truncate")


def _linear_rows(x: Tensor, positions: np.ndarray) -> Tensor:
    lo = np.floor(positions).astype(np.int64)
    hi = np.minimum(lo + 1, x.shape[0] - 1)
    frac = (positions - lo)[:, None].astype(x.data.dtype)  # keep the graph's dtype
    data = x.data[lo] * (1 - frac) + x.data[hi] * frac

    def backward(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, lo, g * (1 - frac))
        np.add.at(dx, hi, g * frac)
        return (dx,)

    return T.make_op(data, (x,), backward, "linear_rows")


def build_scale_pyramid(pair: AlignedPair, factors: tuple = DEFAULT_FACTORS) -> ScaleSet:
    """Non-overlapping mean pooling per factor; factor 1 is the identity."""
    t_len = pair.audio.shape[0]
    if t_len < max(factors):
        raise ValueError(f"sequence length {t_len} shorter than max factor {max(factors)}")
    audio, visual = [], []
    for f in factors:
        if f == 1:
            audio.append(pair.audio)
            visual.append(pair.visual)
        else:
            audio.append(T.group_mean(pair.audio, f))
            visual.append(T.group_mean(pair.visual, f))
    return ScaleSet(audio=audio, visual=visual, factors=tuple(factors), base_len=t_len)


def attention_mask(t_len: int, window: int, causal: bool = True) -> np.ndarray:
    """Boolean (T, T) mask; row t marks the positions t may attend to."""
    idx = np.arange(t_len)
    rel = idx[None, :] - idx[:, None]  # key index minus query index
    if causal:
        return (rel <= 0) & (rel > -window)
    left = (window - 1) // 2
    right = window // 2
    return (rel >= -left) & (rel <= right)


class WindowedAttention:
    """Single-head self-attention restricted to a sliding window, with residual."""

    def __init__(self, dim: int, window: int, rng: np.random.Generator, causal: bool = True):
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.dim = dim
        self.window = window
        self.causal = causal
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        scores = T.matmul(q, T.transpose(k)) * (1.0 / math.sqrt(self.dim))
        mask = attention_mask(x.shape[0], self.window, self.causal)
        scores = T.where_const(scores, mask, -1e30)
        attn = T.softmax(scores)
        out = self.wo(T.matmul(attn, v))
        return x + out

    def attention_weights(self, x: Tensor) -> np.ndarray:
        """Post-softmax weight matrix, for inspection and tests."""
        q, k = self.wq(x), self.wk(x)
        scores = T.matmul(q, T.transpose(k)) * (1.0 / math.sqrt(self.dim))
        mask = attention_mask(x.shape[0], self.window, self.causal)
        return T.softmax(T.where_const(scores, mask, -1e30)).data

    def parameters(self):
        for tag, lin in (("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo)):
            for name, p in lin.parameters():
                yield f"{tag}.{name}", p


def fuse_multiscale(scales: ScaleSet, alphas: list, betas: list) -> Tensor:
    """F(t) = sum_i alpha_i * A_i(t) + beta_i * V_i(t), scales upsampled to T."""
    n = len(scales.factors)
    if len(alphas) != n or len(betas) != n:
        raise ValueError(
            f"got {len(alphas)} alpha / {len(betas)} beta weights for {n} scales"
        )
    t_len = scales.base_len
    fused = None
    for i, factor in enumerate(scales.factors):
        a = scales.audio[i]
        v = scales.visual[i]
        if factor != 1:
            a = T.repeat_upsample(a, factor, t_len)
            v = T.repeat_upsample(v, factor, t_len)
        term = alphas[i] * a + betas[i] * v
        fused = term if fused is None else fused + term
    return fused


class FusionModule:
    """Scale pyramid -> per-scale windowed attention -> weighted recombination."""

    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        factors: tuple = DEFAULT_FACTORS,
        window: int = DEFAULT_WINDOW,
        causal: bool = True,
    ):
        self.factors = tuple(factors)
        n = len(self.factors)
        self.audio_attn = [WindowedAttention(dim, window, rng, causal) for _ in self.factors]
        self.visual_attn = [WindowedAttention(dim, window, rng, causal) for _ in self.factors]
        init = np.float32(1.0 / (2 * n))
        self.alphas = [Tensor(init, requires_grad=True) for _ in self.factors]
        self.betas = [Tensor(init, requires_grad=True) for _ in self.factors]

    def __call__(self, pair: AlignedPair) -> Tensor:
        scales = build_scale_pyramid(pair, self.factors)
        attended = ScaleSet(
            audio=[attn(seq) for attn, seq in zip(self.audio_attn, scales.audio)],
            visual=[attn(seq) for attn, seq in zip(self.visual_attn, scales.visual)],
            factors=scales.factors,
            base_len=scales.base_len,
        )
        return fuse_multiscale(attended, self.alphas, self.betas)

    def parameters(self):
        for i in range(len(self.factors)):
            yield f"alpha.{i}", self.alphas[i]
            yield f"beta.{i}", self.betas[i]
            for name, p in self.audio_attn[i].parameters():
                yield f"scale{i}.audio.{name}", p
            for name, p in self.visual_attn[i].parameters():
                yield f"scale{i}.visual.{name}", p
