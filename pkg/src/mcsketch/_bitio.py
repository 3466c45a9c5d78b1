"""MSB-first bit stream writer/reader with Elias-gamma support.

Values are packed big-endian within the stream: the first bit written is
the most significant bit of the first byte.  The reader is bounded by an
explicit bit length so trailing pad bits can be policed by the caller.
"""

from __future__ import annotations

from .core import FormatError

__all__ = ["BitWriter", "BitReader"]


class BitWriter:
    def __init__(self) -> None:
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    @property
    def bit_length(self) -> int:
        return 8 * len(self._buf) + self._nbits

    def write_uint(self, value: int, width: int) -> None:
        value = int(value)
        if width < 0:
            raise ValueError("negative width")
        if value < 0 or value >> width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        acc = (self._acc << width) | value
        nbits = self._nbits + width
        while nbits >= 8:
            nbits -= 8
            self._buf.append((acc >> nbits) & 0xFF)
        self._acc = acc & ((1 << nbits) - 1)
        self._nbits = nbits

    def write_bit(self, bit: int) -> None:
        self.write_uint(1 if bit else 0, 1)

    def write_gamma(self, value: int) -> None:
        """Elias gamma: N zero bits then the (N+1)-bit value, value >= 1."""
        value = int(value)
        if value < 1:
            raise ValueError(f"gamma code requires value >= 1, got {value}")
        n = value.bit_length() - 1
        self.write_uint(0, n)
        self.write_uint(value, n + 1)

    def getvalue(self) -> bytes:
        """Bytes with zero padding in the final partial byte."""
        out = bytes(self._buf)
        if self._nbits:
            out += bytes([(self._acc << (8 - self._nbits)) & 0xFF])
        return out


class BitReader:
    def __init__(self, data: bytes, bit_length: int | None = None) -> None:
        self._data = data
        self._limit = 8 * len(data) if bit_length is None else bit_length
        if self._limit > 8 * len(data):
            raise FormatError("bit length exceeds the available bytes")
        self._pos = 0

    @property
    def position(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return self._limit - self._pos

    def read_uint(self, width: int) -> int:
        if width < 0:
            raise ValueError("negative width")
        if self._pos + width > self._limit:
            raise FormatError("bit stream truncated")
        pos = self._pos
        self._pos = pos + width
        out = 0
        taken = 0
        while taken < width:
            byte_i, bit_i = divmod(pos + taken, 8)
            avail = 8 - bit_i
            take = min(avail, width - taken)
            chunk = (self._data[byte_i] >> (avail - take)) & ((1 << take) - 1)
            out = (out << take) | chunk
            taken += take
        return out

    def read_bit(self) -> int:
        return self.read_uint(1)

    def read_gamma(self) -> int:
        n = 0
        while self.read_uint(1) == 0:
            n += 1
            if n > self._limit:
                raise FormatError("unterminated gamma code")
        return (1 << n) | self.read_uint(n)
