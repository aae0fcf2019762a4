"""Flat binary checkpoint container, format "posecast-ckpt-v1".

Layout: the magic line, an 8-byte little-endian header length, a sorted-keys
JSON header, then raw little-endian tensor bytes back to back. The header
carries arbitrary JSON metadata (config echo, optimizer scalars, RNG state)
plus a table of named tensors (name, dtype, shape, offset). Writing the same
state twice produces byte-identical files, which torch's zip-based format does
not guarantee.
"""

import json

import numpy as np

from .errors import CheckpointError

MAGIC = b"posecast-ckpt-v1\n"

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "uint8": "|u1"}


def save_checkpoint(path, meta, tensors):
    """Write metadata (JSON-serializable dict) and named numpy arrays."""
    table = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported tensor dtype {dtype} for {name!r}")
        raw = arr.astype(_DTYPES[dtype]).tobytes()
        table.append({
            "name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset,
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"format": "posecast-ckpt-v1", "meta": meta, "tensors": table},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    """Read back (meta, {name: array}); raises CheckpointError on bad files."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a posecast-ckpt-v1 checkpoint")
    pos = len(MAGIC)
    header_len = int.from_bytes(data[pos:pos + 8], "little")
    pos += 8
    try:
        header = json.loads(data[pos:pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {exc}") from None
    blob_start = pos + header_len
    tensors = {}
    for entry in header["tensors"]:
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = blob_start + entry["offset"]
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).astype(entry["dtype"]).copy()
    return header["meta"], tensors
