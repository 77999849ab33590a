"""Global and local views for both modalities, tokenization, projection.

Local audio views are 1-second spectrogram crops with SpecAugment-style
frequency masks; local video views are 1-second frame segments with
crop/flip/rotate augmentation. Views tokenize into time-frequency
patches (audio) or spatio-temporal cuboids (video) and project into one
shared embedding space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from aufuse.audio import POWER_FLOOR, LogMelSpectrogram
from aufuse.layers import Linear
from aufuse.tensor import Tensor
from aufuse.vision import bilinear_resize

LOCAL_AUDIO_FRAMES = 100  # 1 s at the 100 Hz log-Mel frame rate
MAX_FREQ_MASKS = 2
MAX_MASK_WIDTH = 15
MIN_CROP_AREA = 0.8
MAX_ROTATE_DEG = 10.0
LOG_FLOOR = math.log(POWER_FLOOR)

AUDIO_PATCH_T = 10
AUDIO_PATCH_F = 16
VIDEO_CUBOID_T = 5
VIDEO_CUBOID_P = 16


@dataclass
class AudioView:
    kind: str  # "global" | "local"
    matrix: np.ndarray  # (T', 80)
    mask_spec: list = field(default_factory=list)  # [(channel_start, width)]


@dataclass
class VideoView:
    kind: str
    frames: np.ndarray  # (T', H, W, 3)
    fps: float
    augmentations: set = field(default_factory=set)


@dataclass
class TokenSequence:
    tokens: np.ndarray  # (L, D_tok)
    grid: tuple  # token-grid shape: (t_blocks, f_blocks) or (t_blocks, gh, gw)
    modality: str
    frame_rate: float  # source frames per second
    frames_per_token: int


@dataclass
class EmbeddingSequence:
    vectors: Tensor  # (L, D) in the shared space
    modality: str
    timestamps: np.ndarray  # seconds per token/frame


# -- audio views ---------------------------------------------------------------


def audio_global_view(x: LogMelSpectrogram) -> AudioView:
    if x.values.size == 0:
        raise ValueError("cannot build a view of an empty spectrogram")
    return AudioView(kind="global", matrix=x.values.copy(), mask_spec=[])


def _crop_and_mask(values: np.ndarray, start: int, rng: np.random.Generator) -> AudioView:
    crop = values[start : start + LOCAL_AUDIO_FRAMES].copy()
    num_channels = crop.shape[1]
    masks = []
    for _ in range(int(rng.integers(1, MAX_FREQ_MASKS + 1))):
        width = int(rng.integers(1, MAX_MASK_WIDTH + 1))
        ch0 = int(rng.integers(0, num_channels - width + 1))
        crop[:, ch0 : ch0 + width] = 0.0
        masks.append((ch0, width))
    return AudioView(kind="local", matrix=crop, mask_spec=masks)


def audio_local_view(x: LogMelSpectrogram, rng_seed: int) -> AudioView:
    """1-second crop at a seeded uniform start, with 1-2 frequency masks."""
    t_len = x.values.shape[0]
    if t_len < LOCAL_AUDIO_FRAMES:
        raise ValueError(
            f"clip of {t_len} frames is shorter than the {LOCAL_AUDIO_FRAMES}-frame local view"
        )
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(0, t_len - LOCAL_AUDIO_FRAMES + 1))
    return _crop_and_mask(x.values, start, rng)


# -- video views -----------------------------------------------------------------


def hflip_frames(frames: np.ndarray) -> np.ndarray:
    return frames[:, :, ::-1, :].copy()


def rotate_frames(frames: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the center with bilinear sampling, edges clamped."""
    if angle_deg == 0.0:
        return frames.copy()
    t_len, h, w = frames.shape[:3]
    theta = math.radians(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    # inverse map: sample source coordinates rotated by -angle
    src_x = math.cos(theta) * (jj - cx) + math.sin(theta) * (ii - cy) + cx
    src_y = -math.sin(theta) * (jj - cx) + math.cos(theta) * (ii - cy) + cy
    x0 = np.clip(np.floor(src_x).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(src_y).astype(np.int64), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(src_x - x0, 0.0, 1.0)[None, :, :, None]
    fy = np.clip(src_y - y0, 0.0, 1.0)[None, :, :, None]
    top = frames[:, y0, x0] * (1 - fx) + frames[:, y0, x1] * fx
    bot = frames[:, y1, x0] * (1 - fx) + frames[:, y1, x1] * fx
    return top * (1 - fy) + bot * fy


def crop_resize_frames(frames: np.ndarray, area_frac: float, y_rel: float, x_rel: float) -> np.ndarray:
    """Crop an area fraction at a relative position, then resize back."""
    if area_frac >= 1.0:
        return frames.copy()
    t_len, h, w = frames.shape[:3]
    side = math.sqrt(area_frac)
    ch, cw = max(1, round(h * side)), max(1, round(w * side))
    y0 = int(round(y_rel * (h - ch)))
    x0 = int(round(x_rel * (w - cw)))
    cropped = frames[:, y0 : y0 + ch, x0 : x0 + cw, :]
    return np.stack([bilinear_resize(f, h, w) for f in cropped])


def video_global_view(frames: np.ndarray, fps: float) -> VideoView:
    return VideoView(kind="global", frames=np.asarray(frames).copy(), fps=fps, augmentations=set())


def _augment_segment(segment: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, set]:
    applied = set()
    area = float(rng.uniform(MIN_CROP_AREA, 1.0))
    y_rel, x_rel = float(rng.random()), float(rng.random())
    if area < 1.0:
        segment = crop_resize_frames(segment, area, y_rel, x_rel)
        applied.add("crop")
    if rng.random() < 0.5:
        segment = hflip_frames(segment)
        applied.add("horizontal-flip")
    angle = float(rng.uniform(-MAX_ROTATE_DEG, MAX_ROTATE_DEG))
    if angle != 0.0:
        segment = rotate_frames(segment, angle)
        applied.add("rotate")
    return segment, applied


def video_local_view(frames: np.ndarray, fps: float, rng_seed: int) -> VideoView:
    """1-second segment at a seeded uniform start with shared augmentations."""
    frames = np.asarray(frames)
    seg_len = int(round(fps))
    if frames.shape[0] < seg_len:
        raise ValueError(
            f"clip of {frames.shape[0]} frames is shorter than 1 s at {fps} fps"
        )
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(0, frames.shape[0] - seg_len + 1))
    segment, applied = _augment_segment(frames[start : start + seg_len].copy(), rng)
    return VideoView(kind="local", frames=segment, fps=fps, augmentations=applied)


def matched_local_views(
    logmel: LogMelSpectrogram, frames: np.ndarray, fps: float, rng_seed: int
):
    """Temporally aligned local views for supervised training.

    One uniform window start drives both modalities so the audio crop
    and the video segment describe the same second; returns the video
    start index for label slicing.
    """
    frames = np.asarray(frames)
    seg_len = int(round(fps))
    t_audio = logmel.values.shape[0]
    if t_audio < LOCAL_AUDIO_FRAMES or frames.shape[0] < seg_len:
        raise ValueError("clip shorter than 1 s; cannot build matched local views")
    duration = min(t_audio / 100.0, frames.shape[0] / fps)
    rng = np.random.default_rng(rng_seed)
    start_sec = float(rng.uniform(0.0, max(duration - 1.0, 0.0)))
    a0 = min(int(round(start_sec * 100.0)), t_audio - LOCAL_AUDIO_FRAMES)
    v0 = min(int(round(start_sec * fps)), frames.shape[0] - seg_len)
    audio_view = _crop_and_mask(logmel.values, a0, rng)
    segment, applied = _augment_segment(frames[v0 : v0 + seg_len].copy(), rng)
    return audio_view, VideoView(kind="local", frames=segment, fps=fps, augmentations=applied), v0


# -- tokenization ------------------------------------------------------------------


def tokenize_audio_view(
    view: AudioView, patch_t: int = AUDIO_PATCH_T, patch_f: int = AUDIO_PATCH_F
) -> TokenSequence:
    """Cut the view into time-frequency patches, time-major, flattened row-major."""
    matrix = view.matrix
    t_len, n_freq = matrix.shape
    if n_freq % patch_f:
        raise ValueError(f"{n_freq} channels not divisible by patch_f={patch_f}")
    t_pad = -t_len % patch_t
    if t_pad:
        pad = np.full((t_pad, n_freq), LOG_FLOOR, dtype=matrix.dtype)
        matrix = np.concatenate([matrix, pad], axis=0)
    nt = matrix.shape[0] // patch_t
    nf = n_freq // patch_f
    grid = matrix.reshape(nt, patch_t, nf, patch_f)
    tokens = grid.transpose(0, 2, 1, 3).reshape(nt * nf, patch_t * patch_f)
    return TokenSequence(
        tokens=tokens, grid=(nt, nf), modality="audio", frame_rate=100.0, frames_per_token=patch_t
    )


def reassemble_audio_tokens(seq: TokenSequence, patch_t: int = AUDIO_PATCH_T, patch_f: int = AUDIO_PATCH_F) -> np.ndarray:
    nt, nf = seq.grid
    grid = seq.tokens.reshape(nt, nf, patch_t, patch_f).transpose(0, 2, 1, 3)
    return grid.reshape(nt * patch_t, nf * patch_f)


def tokenize_video_view(
    view: VideoView, cuboid_t: int = VIDEO_CUBOID_T, cuboid_p: int = VIDEO_CUBOID_P
) -> TokenSequence:
    """Cut the clip into spatio-temporal cuboids, time-major then row-major."""
    frames = view.frames
    t_len, h, w = frames.shape[:3]
    if h % cuboid_p or w % cuboid_p:
        raise ValueError(f"resolution {h}x{w} not divisible by cuboid size {cuboid_p}")
    t_pad = -t_len % cuboid_t
    if t_pad:
        frames = np.concatenate([frames, np.repeat(frames[-1:], t_pad, axis=0)], axis=0)
    nt = frames.shape[0] // cuboid_t
    gh, gw = h // cuboid_p, w // cuboid_p
    grid = frames.reshape(nt, cuboid_t, gh, cuboid_p, gw, cuboid_p, 3)
    tokens = grid.transpose(0, 2, 4, 1, 3, 5, 6).reshape(
        nt * gh * gw, cuboid_t * cuboid_p * cuboid_p * 3
    )
    return TokenSequence(
        tokens=tokens,
        grid=(nt, gh, gw),
        modality="video",
        frame_rate=view.fps,
        frames_per_token=cuboid_t,
    )


def reassemble_video_tokens(
    seq: TokenSequence, cuboid_t: int = VIDEO_CUBOID_T, cuboid_p: int = VIDEO_CUBOID_P
) -> np.ndarray:
    nt, gh, gw = seq.grid
    grid = seq.tokens.reshape(nt, gh, gw, cuboid_t, cuboid_p, cuboid_p, 3)
    grid = grid.transpose(0, 3, 1, 4, 2, 5, 6)
    return grid.reshape(nt * cuboid_t, gh * cuboid_p, gw * cuboid_p, 3)


# -- shared-space projection ---------------------------------------------------------


class ViewProjector:
    """Learned per-modality affine maps into the shared D-dimensional space."""

    def __init__(self, embed_dim: int, rng: np.random.Generator,
                 audio_token_dim: int = AUDIO_PATCH_T * AUDIO_PATCH_F,
                 video_token_dim: int = VIDEO_CUBOID_T * VIDEO_CUBOID_P**2 * 3):
        self.embed_dim = embed_dim
        self.audio = Linear(audio_token_dim, embed_dim, rng)
        self.video = Linear(video_token_dim, embed_dim, rng)

    def project(self, seq: TokenSequence) -> EmbeddingSequence:
        proj = {"audio": self.audio, "video": self.video}.get(seq.modality)
        if proj is None:
            raise ValueError(f"unknown modality {seq.modality!r}")
        if seq.tokens.shape[1] != proj.in_dim:
            raise ValueError(
                f"{seq.modality} tokens are {seq.tokens.shape[1]}-wide, projection expects {proj.in_dim}"
            )
        vectors = proj(Tensor(seq.tokens.astype(np.float32)))
        tokens_per_block = int(np.prod(seq.grid[1:])) if len(seq.grid) > 1 else 1
        blocks = np.arange(seq.tokens.shape[0]) // tokens_per_block
        timestamps = (blocks + 0.5) * seq.frames_per_token / seq.frame_rate
        return EmbeddingSequence(vectors=vectors, modality=seq.modality, timestamps=timestamps)

    def parameters(self):
        for name, p in self.audio.parameters():
            yield f"audio.{name}", p
        for name, p in self.video.parameters():
            yield f"video.{name}", p
