"""Minimal binary little-endian PLY reader/writer.

Handles exactly the vertex-list layouts this package produces: a single
``vertex`` element with scalar properties. Properties are written in the
order given; readers return a dict of column arrays keyed by property
name, so round trips are lossless.
"""

import numpy as np

from .errors import CheckpointError

_DTYPES = {
    "char": "i1", "uchar": "u1", "short": "i2", "ushort": "u2",
    "int": "i4", "uint": "u4", "float": "f4", "double": "f8",
    "int8": "i1", "uint8": "u1", "int16": "i2", "uint16": "u2",
    "int32": "i4", "uint32": "u4", "float32": "f4", "float64": "f8",
}
_NAMES = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
          "i4": "int", "u4": "uint", "f4": "float", "f8": "double"}


def write_ply(path, columns, comments=()):
    """Write named columns (equal-length 1D arrays) as binary PLY vertices."""
    names = list(columns)
    arrays = [np.ascontiguousarray(columns[n]) for n in names]
    if not arrays:
        raise CheckpointError("PLY needs at least one property")
    n = len(arrays[0])
    if any(len(a) != n or a.ndim != 1 for a in arrays):
        raise CheckpointError("PLY columns must be equal-length 1D arrays")

    fields = []
    for name, arr in zip(names, arrays):
        code = arr.dtype.str.lstrip("<>|=")
        if code not in _NAMES:
            raise CheckpointError(f"unsupported PLY dtype {arr.dtype} ({name})")
        fields.append((name, "<" + code))

    header = ["ply", "format binary_little_endian 1.0"]
    header += [f"comment {c}" for c in comments]
    header.append(f"element vertex {n}")
    header += [f"property {_NAMES[dt.lstrip('<')]} {name}"
               for name, dt in fields]
    header.append("end_header")

    rec = np.empty(n, dtype=fields)
    for name, arr in zip(names, arrays):
        rec[name] = arr
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def read_ply(path):
    """Read a binary little-endian vertex PLY into {name: array}."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise CheckpointError(f"not a PLY file: {path}")
    body = data[end + len(b"end_header\n"):]

    n = None
    fields = []
    in_vertex = False
    for line in data[:end].decode("ascii", "replace").splitlines():
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1] != "binary_little_endian":
                raise CheckpointError(f"unsupported PLY format {tokens[1]}")
        elif tokens[0] == "element":
            in_vertex = tokens[1] == "vertex"
            if in_vertex:
                n = int(tokens[2])
            elif int(tokens[2]) != 0:
                raise CheckpointError(
                    f"unsupported non-empty element {tokens[1]!r}")
        elif tokens[0] == "property" and in_vertex:
            if tokens[1] == "list":
                raise CheckpointError("list properties are not supported")
            if tokens[1] not in _DTYPES:
                raise CheckpointError(f"unknown PLY type {tokens[1]}")
            fields.append((tokens[2], "<" + _DTYPES[tokens[1]]))
    if n is None or not fields:
        raise CheckpointError(f"missing vertex element in {path}")

    dtype = np.dtype(fields)
    if len(body) < n * dtype.itemsize:
        raise CheckpointError(
            f"truncated PLY: need {n * dtype.itemsize} body bytes, "
            f"have {len(body)} in {path}")
    rec = np.frombuffer(body, dtype=dtype, count=n)
    return {name: np.ascontiguousarray(rec[name]) for name, _ in fields}
