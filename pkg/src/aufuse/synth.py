"""Synthetic planted-signal dataset standing in for real AU footage.

Each 4-second clip pairs audio and video evidence for 12 AUs: an active
AU j plays a sinusoid at the center of mel-band region j and lights a
16x16 cell j of a 4x4 image grid (top three rows). Label patterns
switch at 1-second boundaries, so a hand-coded band-energy /
patch-brightness detector can recover them exactly on noise-free clips.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from aufuse.audio import TARGET_RATE, hz_to_mel, mel_to_hz, write_wav
from aufuse.classifier import NUM_AUS
from aufuse.data import LABEL_HEADER
from aufuse.vision import write_ppm

CELL = 16  # image grid cell size in pixels
BACKGROUND = 0.1
PATCH_VALUE = 0.9


def au_tone_frequencies(num_aus: int = NUM_AUS, f_max: float = 8000.0) -> np.ndarray:
    """One tone per AU at the center of its mel-scale region."""
    mel_max = hz_to_mel(f_max)
    return mel_to_hz((np.arange(num_aus) + 0.5) / num_aus * mel_max)


def au_cell(j: int) -> tuple[int, int]:
    """Top-left pixel of AU j's grid cell."""
    return (j // 4) * CELL, (j % 4) * CELL


def synthesize_clip(
    seed,
    fps: int = 10,
    duration: float = 4.0,
    noise: float = 0.05,
    resolution: int = 64,
):
    """One clip: (samples, frames in [0, 1], labels (T, 12))."""
    rng = np.random.default_rng(seed)
    seconds = int(round(duration))
    patterns = rng.integers(0, 2, size=(seconds, NUM_AUS))
    freqs = au_tone_frequencies()

    n = int(duration * TARGET_RATE)
    t = np.arange(n) / TARGET_RATE
    samples = np.zeros(n, dtype=np.float64)
    for s in range(seconds):
        sl = slice(s * TARGET_RATE, (s + 1) * TARGET_RATE)
        for j in np.flatnonzero(patterns[s]):
            samples[sl] += np.sin(2 * np.pi * freqs[j] * t[sl])
    if noise > 0:
        samples += noise * rng.normal(size=n)
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples *= 0.8 / peak

    num_frames = seconds * fps
    frames = np.full((num_frames, resolution, resolution, 3), BACKGROUND)
    labels = np.zeros((num_frames, NUM_AUS), dtype=np.int8)
    for f in range(num_frames):
        pattern = patterns[f // fps]
        labels[f] = pattern
        for j in np.flatnonzero(pattern):
            r, c = au_cell(j)
            frames[f, r : r + CELL, c : c + CELL, :] = PATCH_VALUE
    if noise > 0:
        frames = np.clip(frames + noise * rng.normal(size=frames.shape), 0.0, 1.0)
    return samples, frames, labels


def generate_synthetic(
    num_clips: int,
    seed: int,
    out_dir,
    fps: int = 10,
    noise: float = 0.05,
    duration: float = 4.0,
    resolution: int = 64,
) -> Path:
    """Write WAV + PPM frames + label CSVs + a JSONL manifest; returns the manifest path."""
    if num_clips < 6:
        raise ValueError(f"need at least 6 clips for six-fold CV, got {num_clips}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as manifest:
        for idx in range(num_clips):
            clip_id = f"clip_{idx:03d}"
            clip_dir = out / clip_id
            frames_dir = clip_dir / "frames"
            frames_dir.mkdir(parents=True, exist_ok=True)
            samples, frames, labels = synthesize_clip(
                np.random.SeedSequence([seed, idx]),
                fps=fps,
                duration=duration,
                noise=noise,
                resolution=resolution,
            )
            write_wav(clip_dir / "audio.wav", samples, TARGET_RATE)
            for f, frame in enumerate(frames):
                write_ppm(frames_dir / f"frame_{f:06d}.ppm", frame)
            _write_labels(clip_dir / "labels.csv", labels)
            record = {
                "id": clip_id,
                "wav": f"{clip_id}/audio.wav",
                "frames_dir": f"{clip_id}/frames",
                "fps": fps,
                "labels": f"{clip_id}/labels.csv",
            }
            manifest.write(json.dumps(record, sort_keys=True) + "\n")
    return manifest_path


def _write_labels(path, labels: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LABEL_HEADER + "\n")
        for f, row in enumerate(labels):
            fh.write(f"{f}," + ",".join(str(int(v)) for v in row) + "\n")
