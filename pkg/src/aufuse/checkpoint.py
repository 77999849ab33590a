"""Binary checkpoint format: magic "AUF1", version byte, named float32 blocks."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"AUF1"
VERSION = 1


def save_checkpoint(path, named_params) -> None:
    """Write (name, Tensor-or-array) pairs as length-prefixed float32 blocks."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("B", VERSION))
        for name, param in named_params:
            data = param.data if hasattr(param, "data") else np.asarray(param)
            # not ascontiguousarray: that would promote 0-d scalars to 1-d
            arr = np.asarray(data, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    """Read back a name -> float32 array mapping, validating the header."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not an AUF1 checkpoint")
        (version,) = struct.unpack("B", fh.read(1))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        params = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            (name_len,) = struct.unpack("<H", head)
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError(f"truncated checkpoint block for '{name}'")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return params


def apply_checkpoint(named_params, loaded: dict) -> None:
    """Copy loaded arrays into parameters; names and shapes must match exactly."""
    names = [name for name, _ in named_params]
    missing = [n for n in names if n not in loaded]
    extra = [n for n in loaded if n not in set(names)]
    if missing or extra:
        raise ValueError(f"checkpoint mismatch; missing={missing[:3]} extra={extra[:3]}")
    for name, param in named_params:
        arr = loaded[name]
        if arr.shape != param.data.shape:
            raise ValueError(
                f"checkpoint '{name}' has shape {arr.shape}, parameter has {param.data.shape}"
            )
        param.data = arr.astype(param.data.dtype, copy=True)
