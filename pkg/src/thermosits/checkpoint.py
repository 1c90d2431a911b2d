"""Binary checkpoint container: named float64 arrays plus a JSON header.

Layout (all integers little-endian):

    u32  format version (currently 1)
    u32  header length in bytes, followed by that many bytes of UTF-8 JSON
         (canonical form: sorted keys, no whitespace; empty dict -> length 0)
    u32  record count
    per record:
        u16  name length, then UTF-8 name bytes
        u8   rank, then rank x u32 extents
        prod(extents) x f64 values, row-major

The canonical header plus insertion-ordered records make save(load(f))
byte-identical to f.
"""

import json
import os
import struct
import tempfile

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "write_atomic", "FORMAT_VERSION"]

FORMAT_VERSION = 1


def _canonical_header(meta: dict) -> bytes:
    if not meta:
        return b""
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    """Write arrays (name -> ndarray, insertion order preserved) atomically."""
    chunks = [struct.pack("<I", FORMAT_VERSION)]
    header = _canonical_header(meta or {})
    chunks.append(struct.pack("<I", len(header)))
    chunks.append(header)
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ValueError(f"checkpoint: record name too long: {name!r}")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    write_atomic(path, b"".join(chunks))


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays, meta) with record order preserved."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise ValueError(f"checkpoint {path}: truncated at byte {off}")
        out = blob[off:off + n]
        off += n
        return out

    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise ValueError(f"checkpoint {path}: unsupported format version {version}")
    (hlen,) = struct.unpack("<I", take(4))
    meta = json.loads(take(hlen).decode("utf-8")) if hlen else {}
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape)) if rank else 1
        arrays[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(shape).copy()
    if off != len(blob):
        raise ValueError(f"checkpoint {path}: {len(blob) - off} trailing bytes")
    return arrays, meta


def write_atomic(path, data: bytes) -> None:
    """Write bytes via a temp file and rename, so partial outputs never land."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
