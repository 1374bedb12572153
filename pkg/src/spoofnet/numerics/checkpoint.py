"""Binary parameter checkpoints.

Layout (little endian): magic ``SPNC``, u32 version, then one record per
tensor until end of file: u32 name length, UTF-8 name, u32 rank, rank x u64
dims, float64 payload in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ParseError

MAGIC = b"SPNC"
VERSION = 1


def dumps(state):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in state.items():
        arr = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob):
    if blob[:4] != MAGIC:
        raise ParseError(f"bad checkpoint magic {blob[:4]!r}", offset=0)
    if len(blob) < 8:
        raise ParseError("truncated checkpoint header", offset=len(blob))
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", offset=4)
    pos, state = 8, {}

    def take(n, what):
        nonlocal pos
        if pos + n > len(blob):
            raise ParseError(
                f"truncated {what}: expected {n} bytes, got {len(blob) - pos}",
                offset=pos)
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        name = take(nlen, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims"))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(8 * count, f"payload of {name!r}")
        state[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    return state


def save(path, state):
    Path(path).write_bytes(dumps(state))


def load(path):
    return loads(Path(path).read_bytes())
