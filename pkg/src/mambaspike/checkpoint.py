"""Versioned binary container for named float64 parameter tensors.

Layout (little-endian)::

    header  magic b"MSCK" | version u16 | reserved u16 | count u32 |
            body length u64 | CRC-32 of body u32                    (24 bytes)
    body    per tensor: name length u16 | UTF-8 name | ndim u8 |
            dims u32 * ndim | float64 payload (row-major)
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"MSCK"
VERSION = 1
_HEADER = struct.Struct("<4sHHIQI")


class CheckpointError(ValueError):
    """The file is not a valid checkpoint."""


class CheckpointMismatchError(ValueError):
    """Checkpoint tensors do not match the model's parameters."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("checkpoint does not match model:\n  " + "\n  ".join(problems))


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    body = bytearray()
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        body += struct.pack("<H", len(raw)) + raw
        body += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes(order="C")
    header = _HEADER.pack(MAGIC, VERSION, 0, len(tensors), len(body), zlib.crc32(body))
    return header + bytes(body)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < _HEADER.size:
        raise CheckpointError("file shorter than the checkpoint header")
    magic, version, _, count, length, crc = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    body = buf[_HEADER.size:]
    if len(body) != length:
        raise CheckpointError(f"body is {len(body)} bytes, header declares {length}")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch")
    out, pos = {}, 0
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", body, pos)
            shape = struct.unpack_from(f"<{ndim}I", body, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            out[name] = np.frombuffer(body, "<f8", count=size, offset=pos).reshape(shape).copy()
            pos += 8 * size
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint body: {exc}") from exc
    if pos != len(body):
        raise CheckpointError("trailing bytes after the last tensor")
    return out


def save(tensors: dict[str, np.ndarray], path) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def load_into(model, tensors: dict[str, np.ndarray]) -> None:
    """Copy checkpoint tensors into ``model``; every mismatch is reported at once."""
    expected = {name: p.shape for name, p in model.named_parameters()}
    problems = [f"missing tensor {name} {shape}" for name, shape in expected.items()
                if name not in tensors]
    problems += [f"unexpected tensor {name} {arr.shape}" for name, arr in tensors.items()
                 if name not in expected]
    problems += [f"shape mismatch for {name}: checkpoint {tensors[name].shape}, model {shape}"
                 for name, shape in expected.items()
                 if name in tensors and tensors[name].shape != shape]
    if problems:
        raise CheckpointMismatchError(problems)
    model.load_state_dict(tensors)
