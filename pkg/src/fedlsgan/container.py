"""Self-describing binary container for named float64 arrays.

Layout::

    b"FLGC" | uint32 header length (little endian) | UTF-8 JSON header | data

The header carries ``format_version``, free-form ``meta`` and an ordered
``entries`` list of ``{name, shape, offset}``; data is the concatenation of
every entry as row-major little-endian float64. Writing what was read gives
the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FLGC"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    pass


def dumps(entries: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    index = []
    chunks = []
    offset = 0
    for name, arr in entries.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes(order="C"))
        offset += a.nbytes
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta or {}, "entries": index},
        separators=(",", ":"),
    ).encode()
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:4] != MAGIC:
        raise ContainerError("not a parameter container (bad magic)")
    (hlen,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + hlen].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"unsupported format_version {header.get('format_version')}")
    data = memoryview(blob)[8 + hlen:]
    entries = {}
    for e in header["entries"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=e["offset"])
        entries[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return entries, header["meta"]


def save(path, entries: dict[str, np.ndarray], meta: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(entries, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
