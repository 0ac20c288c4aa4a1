"""Shared binary record helpers: text header lines + raw little-endian arrays.

Both the checkpoint and the dataset container are a sequence of UTF-8
header lines interleaved with fixed-length raw array payloads, so the
byte layout is identical regardless of host endianness and reruns are
byte-for-byte reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError

_WIRE_DTYPES = {"<f4": np.float32, "<f8": np.float64}


def write_line(fh, text: str) -> None:
    fh.write((text + "\n").encode())


def write_array(fh, name: str, arr: np.ndarray) -> None:
    dtype = "<f8" if arr.dtype == np.float64 else "<f4"
    raw = np.ascontiguousarray(arr).astype(dtype, copy=False).tobytes()
    shape = ",".join(str(d) for d in arr.shape)
    write_line(fh, f"tensor {name} {dtype} {shape or '-'} {len(raw)}")
    fh.write(raw)
    fh.write(b"\n")


def read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("file truncated")
    return buf


def read_line(fh) -> str:
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise FormatError("file truncated")
    return line[:-1].decode()


def read_array(fh):
    parts = read_line(fh).split(" ")
    if len(parts) != 5 or parts[0] != "tensor":
        raise FormatError(f"bad tensor record: {parts!r}")
    _, name, dtype, shape_s, nbytes_s = parts
    if dtype not in _WIRE_DTYPES:
        raise FormatError(f"unknown wire dtype {dtype!r}")
    shape = () if shape_s == "-" else tuple(int(d) for d in shape_s.split(","))
    raw = read_exact(fh, int(nbytes_s))
    if read_exact(fh, 1) != b"\n":
        raise FormatError("bad tensor record terminator")
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(_WIRE_DTYPES[dtype])
    return name, arr
