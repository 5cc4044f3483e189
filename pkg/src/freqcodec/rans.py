"""Byte-renormalized range-variant ANS with 16-bit frequencies.

The encoder walks the symbol sequence in reverse (ANS is LIFO) with a
32-bit state; renormalization emits one byte at a time whenever the state
would overflow.  The payload layout is the final state as 4 little-endian
bytes followed by the renormalization bytes in decoder order, so decoding
is a single forward pass.  A stream is rejected as corrupt when it runs
out of bytes, leaves trailing bytes, or does not return the state to the
initial lower bound.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from typing import TYPE_CHECKING

import numpy as np

from .errors import FormatError

if TYPE_CHECKING:  # pragma: no cover
    from .entropy import CdfTable

PRECISION = 16
STATE_LO = 1 << 23  # renormalization interval is [STATE_LO, STATE_LO << 8)
_RENORM_FACTOR = (STATE_LO >> PRECISION) << 8


def encode(starts: np.ndarray, freqs: np.ndarray) -> bytes:
    """Code a sequence given each symbol's (cdf_start, frequency) pair."""
    starts = [int(v) for v in starts]
    freqs = [int(v) for v in freqs]
    state = STATE_LO
    out = bytearray()
    emit = out.append
    for start, freq in zip(reversed(starts), reversed(freqs)):
        limit = _RENORM_FACTOR * freq
        while state >= limit:
            emit(state & 0xFF)
            state >>= 8
        state = ((state // freq) << PRECISION) + (state % freq) + start
    out.reverse()
    return struct.pack("<I", state) + bytes(out)


def decode(payload: bytes, n_symbols: int, table: "CdfTable", per_channel: int) -> np.ndarray:
    """Recover ``n_symbols`` integers; channel of symbol i is i // per_channel."""
    if len(payload) < 4:
        raise FormatError("payload shorter than the 4-byte coder state", offset=len(payload))
    state = struct.unpack_from("<I", payload)[0]
    pos = 4
    end = len(payload)
    out = np.empty(n_symbols, dtype=np.int64)
    mask = (1 << PRECISION) - 1
    cdf = None
    offset = 0
    for i in range(n_symbols):
        if i % per_channel == 0:
            channel = i // per_channel
            cdf = table.cdfs[channel]
            offset = table.offsets[channel]
        slot = state & mask
        idx = bisect_right(cdf, slot) - 1
        lo = cdf[idx]
        freq = cdf[idx + 1] - lo
        out[i] = idx + offset
        state = freq * (state >> PRECISION) + slot - lo
        while state < STATE_LO:
            if pos >= end:
                raise FormatError("payload exhausted mid-stream", offset=pos)
            state = (state << 8) | payload[pos]
            pos += 1
    if pos != end:
        raise FormatError(f"{end - pos} trailing bytes after the last symbol", offset=pos)
    if state != STATE_LO:
        raise FormatError("coder state mismatch after decoding (corrupt payload)", offset=pos)
    return out
