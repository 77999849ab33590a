"""Run configuration: defaults plus a flat `key = value` override file."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class RunConfig:
    seed: int = 42
    epochs: int = 15
    patience: int = 5
    learning_rate: float = 1e-3
    embed_dim: int = 128
    image_size: int = 64
    encoder_widths: tuple = (32, 64, 128)
    encoder_depths: tuple = (1, 1, 1)
    patch_size: int = 4
    dw_kernel: int = 7
    scale_factors: tuple = (1, 2, 4)
    attention_window: int = 8
    attention_centered: bool = False
    tcn_channels: int = 128
    tcn_kernel: int = 3
    tcn_dilations: tuple = (1, 2, 4, 8)
    mlp_hidden: int = 512
    dropout: float = 0.3
    local_view_prob: float = 0.5


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key '{key}': cannot parse boolean from {raw!r}")
    if kind == "tuple":
        return tuple(int(part) for part in raw.split(",") if part.strip())
    raise ValueError(f"config key '{key}' has unsupported type {kind}")


def parse_config(text: str) -> RunConfig:
    """Parse `key = value` lines; blank lines and # comments allowed."""
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"config line {lineno}: unknown key '{key}'")
        setattr(cfg, key, _parse_value(key, raw))
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
