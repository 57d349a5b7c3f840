"""Checkpoint container: one JSON header line, then named float64 blocks.

The header carries arbitrary JSON metadata plus a manifest of
(name, shape, byte offset) for every block; blocks are raw little-endian
float64 in manifest order.  Serialization is canonical (sorted keys,
sorted block names), so save -> load -> save is byte-identical.
"""

import json

import numpy as np


def save(path, meta, arrays):
    manifest = []
    offset = 0
    names = sorted(arrays)
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        manifest.append([name, list(arr.shape), offset])
        offset += arr.nbytes
    header = json.dumps({"meta": meta, "manifest": manifest},
                        sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype=np.float64)
                     .astype("<f8").tobytes())


def load(path):
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            parsed = json.loads(header.decode("utf-8"))
            meta, manifest = parsed["meta"], parsed["manifest"]
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}: not a checkpoint file: {exc}") from exc
        blob = fh.read()
    arrays = {}
    for name, shape, offset in manifest:
        n = int(np.prod(shape)) if shape else 1
        block = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        arrays[name] = block.reshape(shape).astype(np.float64)
    return meta, arrays
