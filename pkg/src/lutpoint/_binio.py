"""Little-endian helpers for the three native file formats."""
import struct

import numpy as np

from .errors import BadMagicError, TruncatedError, VersionError


class Reader:
    """Cursor over an in-memory byte buffer that raises TruncatedError on short reads."""

    def __init__(self, buf, what="file"):
        self.buf = memoryview(buf)
        self.pos = 0
        self.what = what

    def take(self, nbytes):
        end = self.pos + nbytes
        if end > len(self.buf):
            raise TruncatedError(
                f"{self.what}: truncated at byte {self.pos}, needed {nbytes} more bytes"
            )
        out = self.buf[self.pos:end]
        self.pos = end
        return out

    def unpack(self, fmt):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def u32(self):
        return self.unpack("I")[0]

    def u8(self):
        return self.unpack("B")[0]

    def array(self, dtype, count):
        dtype = np.dtype(dtype).newbyteorder("<")
        raw = self.take(dtype.itemsize * count)
        return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="))

    def at_end(self):
        return self.pos == len(self.buf)


def check_header(reader, magic, version):
    got = bytes(reader.take(len(magic))) if len(reader.buf) >= len(magic) else bytes(reader.buf)
    if got != magic:
        raise BadMagicError(f"{reader.what}: bad magic {got!r}, expected {magic!r}")
    v = reader.u32()
    if v != version:
        raise VersionError(f"{reader.what}: unsupported version {v}, expected {version}")


def u32(value):
    return struct.pack("<I", value)


def f32_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()
