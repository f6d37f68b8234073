"""Little-endian binary reading/writing helpers with byte-offset error reporting."""

import struct

import numpy as np

from .errors import FormatError


class Reader:
    def __init__(self, buf, what="file"):
        self.buf = memoryview(buf)
        self.pos = 0
        self.what = what

    def _take(self, n, label):
        if n < 0 or self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated {self.what}: need {n} bytes for {label}, {len(self.buf) - self.pos} left",
                offset=self.pos,
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, label):
        fmt = "<" + fmt
        return struct.unpack(fmt, self._take(struct.calcsize(fmt), label))

    def array(self, dtype, count, label):
        dtype = np.dtype(dtype).newbyteorder("<")
        raw = self._take(count * dtype.itemsize, label)
        return np.frombuffer(raw, dtype=dtype, count=count).astype(dtype.newbyteorder("="))

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes in {self.what}", offset=self.pos)


def pack(fmt, *values):
    return struct.pack("<" + fmt, *values)


def le_bytes(array, dtype):
    return np.ascontiguousarray(array, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()
