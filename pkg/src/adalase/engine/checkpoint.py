"""Sectioned binary weight checkpoints.

Layout: magic ``ADLW``, version u32 LE, then one record per parameter in
declaration order: name length (u32 LE), UTF-8 name, rank (u64 LE), dims
(u64 LE each), raw little-endian float64 values.
"""

import struct

import numpy as np

from ..errors import DataFormatError

MAGIC = b"ADLW"
VERSION = 1


def save_weights(net, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, p in net.named_params():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", p.ndim))
            for d in p.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated checkpoint while reading {what}")
    return buf


def load_weights(net, path):
    """Load a checkpoint into ``net``; rejects any topology mismatch."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise DataFormatError("bad checkpoint magic, expected ADLW")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise DataFormatError(f"unsupported checkpoint version {version}")
        for name, p in net.named_params():
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            got_name = _read_exact(fh, name_len, "name").decode("utf-8")
            if got_name != name:
                raise DataFormatError(f"parameter name mismatch: file has {got_name!r}, "
                                      f"network expects {name!r}")
            (rank,) = struct.unpack("<Q", _read_exact(fh, 8, "rank"))
            dims = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, "dim"))[0] for _ in range(rank)
            )
            if dims != p.shape:
                raise DataFormatError(f"shape mismatch for {name}: file {dims}, network {p.shape}")
            count = int(np.prod(dims)) if dims else 1
            raw = _read_exact(fh, count * 8, f"values of {name}")
            p[:] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(p.dtype)
        extra = fh.read(1)
        if extra:
            raise DataFormatError("checkpoint has trailing data beyond network parameters")
