"""Binary checkpoint format (little-endian).

::

    8s    magic  b"DYHGCKPT"
    u32   format version (1)
    u32   d
    u32   num_classes
    u32   hidden (M)
    u32   num_hyperedges (H)
    f64   leaky_slope
    f64   temperature
    u8    variant index (full, no_gumbel, no_gumbel_no_temp, no_sampling)
    u8    eval_noise
    u32   tensor count
    per tensor:
      u32 name length, name (utf-8), u32 rows, u32 cols, rows*cols f32 row-major

Only parameter values are stored; optimizer state is not.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .dhcm import VARIANTS, DhcmConfig
from .errors import CheckpointError
from .model import PARAM_NAMES, ModelConfig, ModelParams

MAGIC = b"DYHGCKPT"
VERSION = 1
_HEAD = struct.Struct("<8sIIIIIddBBI")


def dumps(cfg: ModelConfig, params: ModelParams) -> bytes:
    out = io.BytesIO()
    out.write(_HEAD.pack(
        MAGIC, VERSION, cfg.d, cfg.num_classes, cfg.hidden, cfg.num_hyperedges,
        cfg.leaky_slope, cfg.dhcm.temperature, VARIANTS.index(cfg.dhcm.variant.value),
        int(cfg.dhcm.eval_noise), len(PARAM_NAMES),
    ))
    for name in PARAM_NAMES:
        value = np.ascontiguousarray(params[name].value, dtype="<f4")
        raw = name.encode()
        out.write(struct.pack("<I", len(raw)) + raw)
        out.write(struct.pack("<II", *value.shape))
        out.write(value.tobytes())
    return out.getvalue()


def loads(blob: bytes) -> tuple[ModelConfig, ModelParams]:
    if len(blob) < _HEAD.size:
        raise CheckpointError(f"checkpoint truncated: {len(blob)} bytes")
    magic, version, d, C, M, H, slope, tau, vidx, noise, count = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if vidx >= len(VARIANTS):
        raise CheckpointError(f"unknown variant index {vidx}")
    try:
        cfg = ModelConfig(d=d, num_classes=C, hidden=M, leaky_slope=slope,
                          dhcm=DhcmConfig(H, tau, VARIANTS[vidx], bool(noise)))
    except ValueError as exc:
        raise CheckpointError(f"invalid config in checkpoint: {exc}") from exc
    pos = _HEAD.size
    values = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, pos)
            name = blob[pos + 4:pos + 4 + n].decode()
            pos += 4 + n
            rows, cols = struct.unpack_from("<II", blob, pos)
            pos += 8
            size = rows * cols * 4
            if pos + size > len(blob):
                raise CheckpointError(f"checkpoint truncated inside tensor {name!r}")
            values[name] = np.frombuffer(blob, "<f4", rows * cols, pos).reshape(rows, cols).astype(np.float32)
            pos += size
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"checkpoint truncated or corrupt: {exc}") from exc
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes in checkpoint")
    for name, shape in cfg.shapes().items():
        if name not in values or values[name].shape != shape:
            raise CheckpointError(f"tensor {name!r} missing or not {shape}")
    return cfg, ModelParams.from_values(values)


def save(path, cfg: ModelConfig, params: ModelParams) -> None:
    Path(path).write_bytes(dumps(cfg, params))


def load(path) -> tuple[ModelConfig, ModelParams]:
    return loads(Path(path).read_bytes())
