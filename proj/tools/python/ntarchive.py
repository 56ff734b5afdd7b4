"""Reader/writer for the itstyler named-tensor archive (.nta)."""

import json
import os
import struct

import numpy as np

MAGIC = b"ITSNTA01"
ALIGN = 64


def read(path):
    """Returns (tensors: dict[str, np.ndarray], meta: dict)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    (size,) = struct.unpack("<Q", blob[8:16])
    manifest = json.loads(blob[16 : 16 + size].decode("utf-8"))
    base = 16 + size
    base += (-base) % ALIGN
    tensors = {}
    for t in manifest["tensors"]:
        if t["dtype"] != "f32" or t.get("byte_order", "little-endian") != "little-endian":
            raise ValueError(f"{t['name']}: unsupported dtype/byte order")
        start = base + t["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=t["nbytes"] // 4, offset=start)
        tensors[t["name"]] = arr.reshape(t["shape"]).copy()
    return tensors, manifest.get("meta", {})


def write(path, tensors, meta=None):
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        data = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": "f32",
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(data),
                "byte_order": "little-endian",
            }
        )
        pad = (-len(data)) % ALIGN
        chunks.append(data + b"\0" * pad)
        offset += len(data) + pad
    manifest = json.dumps(
        {"format": "itstyler-nta", "version": 1, "meta": meta or {}, "tensors": entries}
    ).encode("utf-8")
    head = MAGIC + struct.pack("<Q", len(manifest)) + manifest
    head += b"\0" * ((-len(head)) % ALIGN)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(head)
        for c in chunks:
            f.write(c)
    os.replace(tmp, path)
