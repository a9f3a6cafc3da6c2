"""Agent checkpoints: a JSON manifest followed by raw float32 blobs.

Layout on disk:

    8 bytes little-endian uint64 = byte length of the manifest
    manifest: UTF-8 JSON {"format_version", "code_version", "meta",
        "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    tensor data: float32 little-endian, row-major, at the recorded
        offsets relative to the end of the manifest
"""

import json
import struct

import numpy as np

_LEN = struct.Struct("<Q")
FORMAT_VERSION = 1


def save_checkpoint(path, tensors, meta=None):
    from .. import __version__

    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "code_version": __version__,
        "meta": meta or {},
        "tensors": entries,
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_LEN.pack(len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Returns (tensors dict, manifest dict)."""
    with open(path, "rb") as f:
        raw = f.read(_LEN.size)
        if len(raw) != _LEN.size:
            raise ValueError("truncated checkpoint header")
        (hlen,) = _LEN.unpack(raw)
        header = f.read(hlen)
        if len(header) != hlen:
            raise ValueError("truncated checkpoint manifest")
        manifest = json.loads(header.decode("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format "
                             f"{manifest.get('format_version')!r}")
        data = f.read()
    tensors = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(data):
            raise ValueError(f"tensor {entry['name']!r} overruns file")
        flat = np.frombuffer(data[start:start + nbytes], dtype="<f4")
        tensors[entry["name"]] = flat.reshape(entry["shape"]).copy()
    return tensors, manifest
