"""Adaptive order-0 arithmetic coder for quantizer indices.

Integer-arithmetic variant with a 32-bit coder state and Laplace-smoothed
adaptive symbol counts (all counts start at 1).  Encoder and decoder update
the model identically, so the round trip is bit-exact for every index
sequence.
"""

from __future__ import annotations

import numpy as np

STATE_BITS = 32
MAX_RANGE = 1 << STATE_BITS
MASK = MAX_RANGE - 1
TOP = MAX_RANGE >> 1
SECOND = MAX_RANGE >> 2
MAX_TOTAL = (MAX_RANGE >> 2) + 2


class BitstreamError(ValueError):
    """Raised when a bitstream cannot be decoded."""


class _BitWriter:
    def __init__(self):
        self.bytes = bytearray()
        self._acc = 0
        self._n = 0

    def write(self, bit: int):
        self._acc = (self._acc << 1) | bit
        self._n += 1
        if self._n == 8:
            self.bytes.append(self._acc)
            self._acc = 0
            self._n = 0

    def finish(self) -> bytes:
        while self._n:
            self.write(0)
        return bytes(self.bytes)


class _BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._acc = 0
        self._n = 0

    def read(self) -> int:
        if self._n == 0:
            if self._pos < len(self._data):
                self._acc = self._data[self._pos]
                self._pos += 1
            else:
                self._acc = 0  # implicit trailing zeros
            self._n = 8
        self._n -= 1
        return (self._acc >> self._n) & 1


class _Model:
    """Adaptive frequency table with cumulative sums, counts start at 1."""

    def __init__(self, n_symbols: int):
        if n_symbols < 1:
            raise ValueError("need at least one symbol")
        self.counts = np.ones(n_symbols, dtype=np.int64)
        self.total = n_symbols

    def cumul(self, symbol: int) -> tuple[int, int, int]:
        lo = int(self.counts[:symbol].sum())
        return lo, lo + int(self.counts[symbol]), self.total

    def update(self, symbol: int):
        self.counts[symbol] += 1
        self.total += 1
        if self.total >= MAX_TOTAL:
            self.counts = (self.counts + 1) >> 1
            self.total = int(self.counts.sum())


def entropy_encode(indices: np.ndarray, bits: int) -> bytes:
    """Encode quantizer indices (each < 2**bits) into a byte string."""
    n_symbols = 1 << bits
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= n_symbols):
        raise ValueError("index out of range for the given bit depth")
    model = _Model(n_symbols)
    out = _BitWriter()
    low, high = 0, MASK
    pending = 0

    def emit(bit: int):
        nonlocal pending
        out.write(bit)
        while pending:
            out.write(1 - bit)
            pending -= 1

    for sym in indices:
        c_lo, c_hi, total = model.cumul(int(sym))
        span = high - low + 1
        high = low + span * c_hi // total - 1
        low = low + span * c_lo // total
        while True:
            if high < TOP:
                emit(0)
            elif low >= TOP:
                emit(1)
                low -= TOP
                high -= TOP
            elif low >= SECOND and high < TOP + SECOND:
                pending += 1
                low -= SECOND
                high -= SECOND
            else:
                break
            low <<= 1
            high = (high << 1) | 1
        model.update(int(sym))
    pending += 1
    emit(0 if low < SECOND else 1)
    return out.finish()


def entropy_decode(data: bytes, count: int, bits: int) -> np.ndarray:
    """Decode `count` indices at the given bit depth; inverse of encode."""
    n_symbols = 1 << bits
    model = _Model(n_symbols)
    reader = _BitReader(data)
    low, high = 0, MASK
    code = 0
    for _ in range(STATE_BITS):
        code = (code << 1) | reader.read()
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        span = high - low + 1
        total = model.total
        value = ((code - low + 1) * total - 1) // span
        if value < 0 or value >= total:
            raise BitstreamError("arithmetic decoder state out of range")
        # locate the symbol whose cumulative interval contains value
        cum = np.cumsum(model.counts)
        sym = int(np.searchsorted(cum, value, side="right"))
        c_lo = int(cum[sym - 1]) if sym > 0 else 0
        c_hi = int(cum[sym])
        high = low + span * c_hi // total - 1
        low = low + span * c_lo // total
        while True:
            if high < TOP:
                pass
            elif low >= TOP:
                low -= TOP
                high -= TOP
                code -= TOP
            elif low >= SECOND and high < TOP + SECOND:
                low -= SECOND
                high -= SECOND
                code -= SECOND
            else:
                break
            low <<= 1
            high = (high << 1) | 1
            code = (code << 1) | reader.read()
        out[i] = sym
        model.update(sym)
    return out
