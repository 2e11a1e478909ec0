"""Versioned binary checkpoints: named tensors plus optimizer state.

Byte layout (all integers little-endian):

    offset 0   magic b"WTRK"
    offset 4   u32 format version (currently 1)
    offset 8   u64 header length H
    offset 16  UTF-8 JSON header of H bytes
    16 + H     tensor payload blob

The JSON header holds the epoch counter, a config snapshot, optimizer scalar
state, the payload length, a CRC-32 of the payload, and a table of tensors
(name, dtype, shape, offset, nbytes) sorted by name. Tensor bytes are raw
little-endian array data at header-relative offsets, so save -> load -> save
is byte-identical.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"WTRK"
FORMAT_VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    """Loaded checkpoint contents, independent of any live model."""

    format_version: int
    epoch: int
    config: dict
    tensors: dict[str, np.ndarray]
    optim: dict = field(default_factory=dict)


def save_checkpoint(path, tensors: dict[str, np.ndarray], epoch: int,
                    config: dict | None = None, optim: dict | None = None) -> None:
    """Write named tensors with metadata; see the module docstring for layout."""
    entries = []
    payload_parts = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        code = arr.dtype.newbyteorder("<").str
        if code not in _DTYPES:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        raw = arr.astype(code, copy=False).tobytes()
        entries.append(
            {"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        payload_parts.append(raw)
        offset += len(raw)
    payload = b"".join(payload_parts)

    header = {
        "epoch": int(epoch),
        "config": config or {},
        "optim": optim or {},
        "payload_len": len(payload),
        "payload_crc32": zlib.crc32(payload),
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    """Read and fully validate a checkpoint before anything touches a model."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 16:
        raise CheckpointError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[0:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[0:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} != supported {FORMAT_VERSION}")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    if 16 + header_len > len(blob):
        raise CheckpointError(f"{path}: truncated JSON header")
    try:
        header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None

    payload = blob[16 + header_len :]
    if len(payload) != header["payload_len"]:
        raise CheckpointError(
            f"{path}: truncated payload ({len(payload)} of {header['payload_len']} bytes)"
        )
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")

    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: tensor {entry['name']!r} has unknown dtype {entry['dtype']}")
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
        tensors[entry["name"]] = arr
    return Checkpoint(
        format_version=version,
        epoch=header["epoch"],
        config=header["config"],
        tensors=tensors,
        optim=header["optim"],
    )


def extract_group(ckpt: Checkpoint, prefix: str, expected: dict[str, tuple[int, ...]]) -> dict[str, np.ndarray]:
    """Pull `prefix/<name>` tensors, validating presence and shape up front.

    Raises one error listing every missing name so a bad transfer fails loudly.
    """
    missing = []
    wrong = []
    out = {}
    for name, shape in expected.items():
        key = f"{prefix}/{name}"
        if key not in ckpt.tensors:
            missing.append(key)
            continue
        arr = ckpt.tensors[key]
        if tuple(arr.shape) != tuple(shape):
            wrong.append(f"{key}: checkpoint {tuple(arr.shape)} != model {tuple(shape)}")
            continue
        out[name] = arr
    if missing:
        raise CheckpointError("checkpoint is missing tensors: " + ", ".join(sorted(missing)))
    if wrong:
        raise CheckpointError("checkpoint tensor shapes do not match: " + "; ".join(wrong))
    return out
