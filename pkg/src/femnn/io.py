"""Binary container shared by datasets, checkpoints and solution dumps.

Layout::

    8 bytes   little-endian uint64 N, length of the header
    N bytes   UTF-8 JSON header; header["arrays"] lists {"name", "shape"}
    ...       each array in header order, little-endian float64, C order
"""
import json
import struct

import numpy as np

FORMAT_VERSION = 1


def write_container(path, header, arrays):
    header = dict(header)
    header["version"] = FORMAT_VERSION
    header["arrays"] = [
        {"name": name, "shape": list(np.shape(arr))} for name, arr in arrays.items()
    ]
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported container version {header.get('version')}")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    return header, arrays
