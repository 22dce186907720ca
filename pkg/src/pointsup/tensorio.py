"""Tiny self-describing binary container for parameter vectors and feature
grids: magic, JSON header (dtype, shape, kind, metadata), raw C-order bytes.
"""

import json
import struct

import numpy as np

MAGIC = b"PSUP\x01"


def save_tensor(path, array, kind, meta=None):
    array = np.ascontiguousarray(array)
    header = json.dumps(
        {
            "dtype": array.dtype.str,
            "shape": list(array.shape),
            "kind": kind,
            "meta": meta or {},
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(array.tobytes())


def load_tensor(path, expect_kind=None):
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a pointsup tensor file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        data = f.read()
    if expect_kind is not None and header["kind"] != expect_kind:
        raise ValueError(f"{path}: expected kind {expect_kind!r}, found {header['kind']!r}")
    array = np.frombuffer(data, dtype=np.dtype(header["dtype"])).reshape(header["shape"]).copy()
    return array, header["kind"], header["meta"]
