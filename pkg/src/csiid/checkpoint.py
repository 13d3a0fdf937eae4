"""Binary model checkpoints.

Layout (little-endian)::

    b"CSIM" | u16 version | u32 n | n bytes of JSON config
    u32 param count
    per parameter: u16 name length | name | u8 ndim | u32 dims... | f32 values
    u32 CRC-32 of everything above
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"CSIM"
VERSION = 1


class IntegrityError(ValueError):
    pass


def save_checkpoint(path, model, config):
    params = model.named_parameters()
    blob = json.dumps(config, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(blob)), blob, struct.pack("<I", len(params))]
    for name, p in params:
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{p.data.ndim}I", p.data.ndim, *p.data.shape))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    body = b"".join(chunks)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path):
    """Return ``(config, {name: float32 array})``; raises IntegrityError on corruption."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 14 or blob[:4] != MAGIC:
        raise IntegrityError(f"checkpoint integrity: {path} is not a CSIM checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError(f"checkpoint integrity: checksum mismatch in {path}")
    version, n = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise IntegrityError(f"checkpoint integrity: unsupported version {version}")
    off = 10
    config = json.loads(body[off : off + n].decode())
    off += n
    (count,) = struct.unpack_from("<I", body, off)
    off += 4
    params = {}
    for _ in range(count):
        (length,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off : off + length].decode()
        off += length
        (ndim,) = struct.unpack_from("<B", body, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        size = int(np.prod(shape))
        params[name] = np.frombuffer(body, dtype="<f4", count=size, offset=off).reshape(shape).copy()
        off += 4 * size
    if off != len(body):
        raise IntegrityError(f"checkpoint integrity: {len(body) - off} trailing bytes in {path}")
    return config, params
