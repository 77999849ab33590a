"""ConvNeXt-style visual encoder for pre-cropped face frames.

Patchify stem (4x4 conv, stride 4), stages of 7x7 depthwise blocks with
layer normalization and GELU pointwise expansion, 2x patch-conv
downsampling between stages, and global average pooling into a
per-frame feature vector. Frames arrive pre-cropped; there is no face
detector here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aufuse import tensor as T
from aufuse.layers import LayerNorm, Linear, collect_parameters, fan_in_uniform
from aufuse.tensor import Tensor

CHANNEL_MEAN = 0.5
CHANNEL_STD = 0.25


@dataclass
class EncoderConfig:
    resolution: int = 64
    widths: tuple = (32, 64, 128)
    depths: tuple = (1, 1, 1)
    dw_kernel: int = 7
    patch_size: int = 4

    @property
    def total_stride(self) -> int:
        return self.patch_size * 2 ** (len(self.widths) - 1)

    @property
    def out_dim(self) -> int:
        return self.widths[-1]


# -- PPM (P6) frame files -----------------------------------------------------


def read_ppm(path) -> np.ndarray:
    """Read a binary 8-bit P6 image as an H x W x 3 float array in [0, 1]."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ValueError(f"cannot read frame image {path}: {exc}") from exc
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"corrupt PPM header in {path}")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise ValueError(f"{path} is not a binary P6 PPM file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    body = raw[pos : pos + width * height * 3]
    if len(body) != width * height * 3:
        raise ValueError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return pixels.astype(np.float64) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    """Write an H x W x 3 array in [0, 1] as binary 8-bit P6."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    ints = np.round(arr * 255.0).astype(np.uint8)
    h, w = ints.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(ints.tobytes())


# -- preprocessing -------------------------------------------------------------


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with the half-pixel center convention, edges clamped."""
    in_h, in_w = image.shape[:2]
    if in_h == out_h and in_w == out_w:
        return image.copy()

    def sample_axis(out_n, in_n):
        pos = (np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5
        lo = np.clip(np.floor(pos).astype(np.int64), 0, in_n - 1)
        hi = np.clip(lo + 1, 0, in_n - 1)
        frac = np.clip(pos - lo, 0.0, 1.0)
        return lo, hi, frac

    ylo, yhi, fy = sample_axis(out_h, in_h)
    xlo, xhi, fx = sample_axis(out_w, in_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = image[ylo][:, xlo] * (1 - fx) + image[ylo][:, xhi] * fx
    bottom = image[yhi][:, xlo] * (1 - fx) + image[yhi][:, xhi] * fx
    return top * (1 - fy) + bottom * fy


def standardize(image: np.ndarray) -> np.ndarray:
    """Fixed per-channel standardization of [0, 1] pixels."""
    return (image - CHANNEL_MEAN) / CHANNEL_STD


def preprocess_frame(raw: np.ndarray, resolution: int = 64) -> np.ndarray:
    """Resize a raw [0, 1] image to resolution x resolution and standardize."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.size == 0 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected a nonempty H x W x 3 image, got shape {arr.shape}")
    resized = bilinear_resize(arr, resolution, resolution)
    return standardize(resized)


# -- encoder layers --------------------------------------------------------------


class PatchConv:
    """Kernel-equals-stride convolution; used by the stem and downsampling."""

    def __init__(self, patch: int, in_ch: int, out_ch: int, rng: np.random.Generator):
        self.patch = patch
        fan_in = patch * patch * in_ch
        self.weight = Tensor(fan_in_uniform(rng, (fan_in, out_ch), fan_in), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.patch_conv2d(x, self.weight, self.patch) + self.bias

    def parameters(self):
        yield "weight", self.weight
        yield "bias", self.bias


class ConvNextBlock:
    """Depthwise 7x7 -> layer norm -> 4x pointwise expansion -> GELU -> project, residual."""

    def __init__(self, channels: int, kernel: int, rng: np.random.Generator):
        fan_in = kernel * kernel
        self.dw_weight = Tensor(
            fan_in_uniform(rng, (kernel, kernel, channels), fan_in), requires_grad=True
        )
        self.dw_bias = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.norm = LayerNorm(channels)
        self.expand = Linear(channels, 4 * channels, rng)
        self.project = Linear(4 * channels, channels, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.depthwise_conv2d(x, self.dw_weight) + self.dw_bias
        h = self.norm(h)
        h = self.project(T.gelu(self.expand(h)))
        return x + h

    def parameters(self):
        yield from collect_parameters(
            [
                ("dw_weight", self.dw_weight),
                ("dw_bias", self.dw_bias),
                ("norm", self.norm),
                ("expand", self.expand),
                ("project", self.project),
            ]
        )


class Downsample:
    """Layer norm then 2x2 stride-2 patch conv between stages."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator):
        self.norm = LayerNorm(in_ch)
        self.conv = PatchConv(2, in_ch, out_ch, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(self.norm(x))

    def parameters(self):
        yield from collect_parameters([("norm", self.norm), ("conv", self.conv)])


def global_average_pool(x: Tensor) -> Tensor:
    """Per-channel mean over the spatial grid: (..., H, W, C) -> (..., C)."""
    if x.data.shape[-2] == 0 or x.data.shape[-3] == 0:
        raise ValueError(f"cannot pool an empty spatial grid, shape {x.data.shape}")
    return T.mean_over(x, (x.data.ndim - 3, x.data.ndim - 2))


class VisualEncoder:
    """Patchify stem -> staged ConvNeXt blocks -> global average pooling."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        if cfg.resolution % cfg.total_stride:
            raise ValueError(
                f"resolution {cfg.resolution} not divisible by total stride {cfg.total_stride}"
            )
        self.cfg = cfg
        self.stem = PatchConv(cfg.patch_size, 3, cfg.widths[0], rng)
        self.stem_norm = LayerNorm(cfg.widths[0])
        self.stages = []
        self.downsamples = []
        for i, width in enumerate(cfg.widths):
            if i > 0:
                self.downsamples.append(Downsample(cfg.widths[i - 1], width, rng))
            self.stages.append(
                [ConvNextBlock(width, cfg.dw_kernel, rng) for _ in range(cfg.depths[i])]
            )

    def forward_grid(self, x: Tensor) -> Tensor:
        """Feature map before pooling; x is (..., H, W, 3) standardized pixels."""
        h = self.stem_norm(self.stem(x))
        for i, blocks in enumerate(self.stages):
            if i > 0:
                h = self.downsamples[i - 1](h)
            for block in blocks:
                h = block(h)
        return h

    def __call__(self, x: Tensor) -> Tensor:
        """Encode (..., H, W, 3) frames into (..., C) embeddings."""
        return global_average_pool(self.forward_grid(x))

    def parameters(self):
        named = [("stem", self.stem), ("stem_norm", self.stem_norm)]
        for i, ds in enumerate(self.downsamples):
            named.append((f"down{i}", ds))
        for i, blocks in enumerate(self.stages):
            for j, block in enumerate(blocks):
                named.append((f"stage{i}.block{j}", block))
        yield from collect_parameters(named)


def encode_frame(image: np.ndarray, encoder: VisualEncoder) -> np.ndarray:
    """Encode one preprocessed H x W x 3 frame to a feature vector."""
    out = encoder(Tensor(np.asarray(image, dtype=np.float32)))
    return out.data
