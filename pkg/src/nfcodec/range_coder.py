"""Carry-less (Subbotin) range coder with 64-bit state and 16-bit frozen CDFs.

Integer-only after :func:`freeze`, so the byte output is platform independent.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 56
_BOT = 1 << 48
_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class FrozenCdf:
    offset: int  # symbol value of table entry 0
    cumulative: tuple  # len = alphabet + 1, cumulative[0] = 0, cumulative[-1] = TOTAL

    @property
    def size(self) -> int:
        return len(self.cumulative) - 1

    def freq(self, i: int) -> int:
        return self.cumulative[i + 1] - self.cumulative[i]

    def counts(self) -> np.ndarray:
        return np.diff(np.asarray(self.cumulative, dtype=np.int64))

    def bits(self, symbols) -> float:
        """Ideal code length of ``symbols`` under the quantized table."""
        s = np.asarray(symbols, dtype=np.int64) - self.offset
        c = self.counts()
        return float(-np.log2(c[s] / TOTAL).sum()) if s.size else 0.0


def freeze(pmf, offset: int = 0) -> FrozenCdf:
    """Quantize a pmf to integer counts summing to 2^16, each at least 1.

    One count is reserved per symbol; the rest is split proportionally, and
    leftover counts go to the largest fractional remainders (ties: lower index).
    """
    p = np.asarray(pmf, dtype=np.float64)
    n = len(p)
    if n == 0 or n > TOTAL:
        raise ValueError(f"alphabet size {n} outside [1, {TOTAL}]")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("pmf must be finite and non-negative")
    s = p.sum()
    p = p / s if s > 0 else np.full(n, 1.0 / n)
    free = TOTAL - n
    scaled = p * free
    base = np.floor(scaled).astype(np.int64)
    left = free - int(base.sum())
    if left > 0:
        frac = scaled - base
        order = np.lexsort((np.arange(n), -frac))
        base[order[:left]] += 1
    elif left < 0:  # float rounding pushed the floors over budget
        order = np.lexsort((np.arange(n), scaled - base))
        for i in order:
            if left == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                left += 1
    counts = base + 1
    cum = np.concatenate([[0], np.cumsum(counts)])
    assert cum[-1] == TOTAL
    return FrozenCdf(int(offset), tuple(int(c) for c in cum))


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()

    def encode(self, symbol: int, cdf: FrozenCdf) -> None:
        i = symbol - cdf.offset
        if not 0 <= i < cdf.size:
            raise ValueError(f"symbol {symbol} outside alphabet "
                             f"[{cdf.offset}, {cdf.offset + cdf.size - 1}]")
        cum = cdf.cumulative
        r = self.range >> PRECISION
        self.low += cum[i] * r
        self.range = r * (cum[i + 1] - cum[i])
        self._normalize()

    def _normalize(self):
        low, rng, out = self.low, self.range, self.out
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = -low & (_BOT - 1)
            else:
                break
            out.append(low >> 56)
            low = (low << 8) & _MASK
            rng = (rng << 8) & _MASK
        self.low, self.range = low, rng

    def finish(self) -> bytes:
        """Flush the fewest bytes that pin a value inside the final interval.

        The decoder reads missing trailing bytes as zero, so the value with the
        most trailing zero bytes in [low, low + range) is emitted.
        """
        for k in range(9):
            shift = 64 - 8 * k
            v = -(-self.low >> shift) << shift  # low rounded up to a multiple of 2^shift
            if v - self.low < self.range:
                for j in range(k):
                    self.out.append((v >> (56 - 8 * j)) & 0xFF)
                return bytes(self.out)
        raise AssertionError("unreachable: 8 bytes always pin the value")


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0
        self.low = 0
        self.range = _MASK
        self.code = 0
        for _ in range(8):
            self.code = (self.code << 8) | self._byte()

    def _byte(self) -> int:
        # the encoder drops trailing zero bytes; more than a register's worth means truncation
        if self.pos >= len(self.data):
            if self.pos >= len(self.data) + 8:
                raise DecodeError("range-coded segment truncated")
            self.pos += 1
            return 0
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, cdf: FrozenCdf) -> int:
        cum = cdf.cumulative
        r = self.range >> PRECISION
        v = (self.code - self.low) // r
        if v >= TOTAL:
            raise DecodeError("corrupt range-coded data")
        i = bisect.bisect_right(cum, v) - 1
        self.low += cum[i] * r
        self.range = r * (cum[i + 1] - cum[i])
        low, rng, code = self.low, self.range, self.code
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOT:
                rng = -low & (_BOT - 1)
            else:
                break
            code = ((code << 8) | self._byte()) & _MASK
            low = (low << 8) & _MASK
            rng = (rng << 8) & _MASK
        self.low, self.range, self.code = low, rng, code
        return i + cdf.offset


def encode_symbols(symbols, cdf: FrozenCdf) -> bytes:
    enc = RangeEncoder()
    for s in np.asarray(symbols, dtype=np.int64).tolist():
        enc.encode(s, cdf)
    return enc.finish()


def decode_symbols(data: bytes, count: int, cdf: FrozenCdf) -> np.ndarray:
    dec = RangeDecoder(data)
    out = np.empty(count, dtype=np.int64)
    for k in range(count):
        out[k] = dec.decode(cdf)
    return out
