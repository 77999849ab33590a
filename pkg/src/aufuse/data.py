"""Manifest, label, and clip ingestion for the training harness."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from aufuse.audio import wav_to_logmel
from aufuse.classifier import NUM_AUS
from aufuse.vision import bilinear_resize, read_ppm

LABEL_HEADER = "frame," + ",".join(f"au{j}" for j in range(1, NUM_AUS + 1))


@dataclass
class ClipRecord:
    id: str
    wav: Path
    frames_dir: Path
    fps: float
    labels: Path


@dataclass
class ClipData:
    record: ClipRecord
    logmel: np.ndarray  # (T_a, 80) float64
    frames: np.ndarray  # (T_v, res, res, 3) float64 in [0, 1], resized
    labels: np.ndarray  # (T_v, 12) int8


def read_manifest(path) -> list[ClipRecord]:
    """One JSON object per line: id, wav, frames_dir, fps, labels.

    Relative paths resolve against the manifest's directory; referenced
    files must exist.
    """
    base = Path(path).parent
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            missing = {"id", "wav", "frames_dir", "fps", "labels"} - set(obj)
            if missing:
                raise ValueError(f"manifest line {lineno}: missing keys {sorted(missing)}")
            fps = float(obj["fps"])
            if fps <= 0:
                raise ValueError(f"manifest line {lineno}: fps must be positive, got {fps}")
            record = ClipRecord(
                id=str(obj["id"]),
                wav=_resolve(base, obj["wav"]),
                frames_dir=_resolve(base, obj["frames_dir"]),
                fps=fps,
                labels=_resolve(base, obj["labels"]),
            )
            for attr in ("wav", "frames_dir", "labels"):
                target = getattr(record, attr)
                if not target.exists():
                    raise FileNotFoundError(f"clip '{record.id}': {attr} not found at {target}")
            records.append(record)
    return records


def _resolve(base: Path, value) -> Path:
    candidate = Path(value)
    return candidate if candidate.is_absolute() else base / candidate


def read_labels(path) -> np.ndarray:
    """CSV with header 'frame,au1..au12' and 0/1 rows, one per frame."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != LABEL_HEADER:
            raise ValueError(f"{path}: unexpected label header {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != NUM_AUS + 1:
                raise ValueError(f"{path}: bad label row {line!r}")
            rows.append([int(v) for v in parts[1:]])
    labels = np.asarray(rows, dtype=np.int8)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise ValueError(f"{path}: labels must be 0/1")
    return labels


def load_clip(record: ClipRecord, resolution: int = 64) -> ClipData:
    """Decode one clip: log-Mel matrix, resized [0, 1] frames, labels."""
    logmel = wav_to_logmel(record.wav).values
    labels = read_labels(record.labels)
    frame_paths = sorted(Path(record.frames_dir).glob("frame_*.ppm"))
    if len(frame_paths) != labels.shape[0]:
        raise ValueError(
            f"clip '{record.id}': {len(frame_paths)} frames but {labels.shape[0]} label rows"
        )
    frames = []
    for p in frame_paths:
        img = read_ppm(p)
        if img.shape[0] != resolution or img.shape[1] != resolution:
            img = bilinear_resize(img, resolution, resolution)
        frames.append(img)
    return ClipData(record=record, logmel=logmel, frames=np.stack(frames), labels=labels)


class ClipCache:
    """Lazy per-id clip loading, shared across folds."""

    def __init__(self, records: list[ClipRecord], resolution: int = 64):
        self.by_id = {r.id: r for r in records}
        self.resolution = resolution
        self._loaded: dict[str, ClipData] = {}

    def get(self, clip_id: str) -> ClipData:
        if clip_id not in self._loaded:
            self._loaded[clip_id] = load_clip(self.by_id[clip_id], self.resolution)
        return self._loaded[clip_id]
