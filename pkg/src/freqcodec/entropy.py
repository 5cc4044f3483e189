"""Factorized per-channel density model, rate estimation, and the bridge
from model probabilities to integer-frequency coding tables.

Each channel gets an independent univariate CDF built from a chain of four
monotone stages (filter widths 1-3-3-3-1): softplus-positive matrices keep
every stage nondecreasing, tanh-bounded gates keep it invertible, and the
final sigmoid maps to (0,1).  The probability of an integer symbol is the
CDF mass of its unit bin, floored at 1e-9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rans
from . import tensor as T
from .optim import Parameter
from .tensor import Tensor

LIKELIHOOD_FLOOR = 1e-9
TAIL_MASS = 1e-9
PRECISION = 16
_FILTERS = (1, 3, 3, 3, 1)
_INIT_SCALE = 10.0


class FactorizedDensity:
    """Per-channel univariate CDF network for latent rate modeling."""

    def __init__(self, name: str, channels: int, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        self.channels = channels
        k = len(_FILTERS) - 1
        scale = _INIT_SCALE ** (1.0 / k)
        self.matrices: list[Parameter] = []
        self.biases: list[Parameter] = []
        self.gates: list[Parameter] = []
        if rng is None:
            rng = np.random.default_rng(0)
        for i in range(k):
            d_in, d_out = _FILTERS[i], _FILTERS[i + 1]
            init = math.log(math.expm1(1.0 / scale / d_out))
            self.matrices.append(Parameter(
                f"{name}.h{i}", np.full((channels, d_out, d_in), init, dtype=dtype)))
            self.biases.append(Parameter(
                f"{name}.b{i}", rng.uniform(-0.5, 0.5, (channels, d_out, 1)).astype(dtype)))
            if i < k - 1:
                self.gates.append(Parameter(
                    f"{name}.a{i}", np.zeros((channels, d_out, 1), dtype=dtype)))

    def parameters(self):
        for group in (self.matrices, self.biases, self.gates):
            yield from group

    def _logits(self, x: Tensor) -> Tensor:
        """Monotone pre-sigmoid chain; x and result are [C, 1, M]."""
        z = x
        for i, (h, b) in enumerate(zip(self.matrices, self.biases)):
            z = T.matmul_cw(T.softplus(h.tensor), z) + b.tensor
            if i < len(self.gates):
                a = self.gates[i].tensor
                z = z + T.tanh(a) * T.tanh(z)
        return z

    def cdf(self, x: Tensor) -> Tensor:
        """Strictly increasing CDF values in (0, 1); x is [C, 1, M]."""
        return T.sigmoid(self._logits(x))

    def likelihood(self, y: Tensor) -> Tensor:
        """Probability of each value's unit bin: c(y + 1/2) - c(y - 1/2).

        ``y`` is [C,h,w] or [N,C,h,w]; the result has the same shape, each
        entry in (0, 1], floored at 1e-9, differentiable w.r.t. both the
        values and the density parameters.
        """
        batched = y.ndim == 4
        c = y.shape[1] if batched else y.shape[0]
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        flat = T.moveaxis(y, 1, 0) if batched else y
        flat = T.reshape(flat, (c, 1, flat.size // c))
        half = Tensor(np.asarray(0.5, dtype=y.dtype))
        p = self.cdf(flat + half) - self.cdf(flat - half)
        p = T.lower_bound(p, LIKELIHOOD_FLOOR)
        p = T.reshape(p, (c,) + (y.shape[0],) + y.shape[2:]) if batched else T.reshape(p, y.shape)
        return T.moveaxis(p, 0, 1) if batched else p

    def cdf_numpy(self, x: np.ndarray) -> np.ndarray:
        """Float64 CDF evaluation for table building; x is [C, M]."""
        with T.no_grad():
            t = Tensor(x[:, None, :], dtype=np.float64)
            z = t
            for i, (h, b) in enumerate(zip(self.matrices, self.biases)):
                hs = T.softplus(Tensor(h.data, dtype=np.float64))
                z = T.matmul_cw(hs, z) + Tensor(b.data, dtype=np.float64)
                if i < len(self.gates):
                    a = np.tanh(self.gates[i].data.astype(np.float64))
                    z = z + Tensor(a) * T.tanh(z)
            return T.sigmoid(z).data[:, 0, :]


def quantize(y: Tensor, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Integer rounding for inference, additive uniform noise for training.

    Round mode is half-away-from-zero with a straight-through gradient;
    noise mode adds i.i.d. Uniform(-1/2, 1/2) so gradients pass unchanged.
    """
    if mode == "round":
        return T.round_ste(y)
    if mode == "noise":
        if rng is None:
            raise ValueError("noise mode requires an rng")
        u = rng.uniform(-0.5, 0.5, size=y.shape).astype(y.dtype)
        return y + Tensor(u)
    raise ValueError(f"unknown quantization mode {mode!r}")


def estimate_bits(y: Tensor, density: FactorizedDensity) -> Tensor:
    """Total information content, sum of -log2 p, as a differentiable scalar."""
    p = density.likelihood(y)
    return T.sum_all(T.log(p)) * (-1.0 / math.log(2.0))


# -- coding tables ------------------------------------------------------


@dataclass(frozen=True)
class CdfTable:
    """Integer coding tables: one quantized CDF per channel.

    ``cdfs[c]`` has ``counts[c] + 1`` entries from 0 to 65536, strictly
    increasing, so every in-range symbol keeps a nonzero frequency.
    """

    offsets: tuple[int, ...]
    counts: tuple[int, ...]
    cdfs: tuple[tuple[int, ...], ...]

    @property
    def channels(self) -> int:
        return len(self.offsets)

    def ranges(self) -> list[tuple[int, int]]:
        return [(o, o + n - 1) for o, n in zip(self.offsets, self.counts)]


def _quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Deterministically turn a pmf into integer frequencies summing to 2^16."""
    n = pmf.size
    total = 1 << PRECISION
    budget = total - n  # reserve 1 per symbol
    pmf = pmf / pmf.sum()
    scaled = pmf * budget
    freqs = np.floor(scaled).astype(np.int64) + 1
    rem = total - int(freqs.sum())
    if rem > 0:
        # Hand out the remainder by largest fractional part, ties by index.
        frac = scaled - np.floor(scaled)
        order = np.lexsort((np.arange(n), -frac))
        freqs[order[:rem]] += 1
    return freqs


def build_cdf_tables(density: FactorizedDensity, ranges: Sequence[tuple[int, int]]) -> CdfTable:
    """Quantize the model CDF to 16-bit integer tables over the given ranges.

    The result is deterministic for identical parameters and ranges; every
    symbol in range gets frequency >= 1 even when its model probability is
    below 2^-16.
    """
    if len(ranges) != density.channels:
        raise ValueError(f"need {density.channels} ranges, got {len(ranges)}")
    for c, (lo, hi) in enumerate(ranges):
        if hi < lo:
            raise ValueError(f"channel {c}: empty range [{lo}, {hi}]")
    # One vectorized CDF evaluation over all channels, padded to the widest range.
    max_edges = max(hi - lo + 2 for lo, hi in ranges)
    edges = np.zeros((density.channels, max_edges), dtype=np.float64)
    for c, (lo, hi) in enumerate(ranges):
        n = hi - lo + 2
        edges[c, :n] = np.arange(lo, hi + 2, dtype=np.float64) - 0.5
        edges[c, n:] = edges[c, n - 1]
    cvals = density.cdf_numpy(edges)
    offsets, counts, cdfs = [], [], []
    for c, (lo, hi) in enumerate(ranges):
        n = hi - lo + 2
        pmf = np.maximum(np.diff(cvals[c, :n]), LIKELIHOOD_FLOOR)
        freqs = _quantize_pmf(pmf)
        cdf = np.concatenate(([0], np.cumsum(freqs)))
        offsets.append(int(lo))
        counts.append(int(hi - lo + 1))
        cdfs.append(tuple(int(v) for v in cdf))
    return CdfTable(tuple(offsets), tuple(counts), tuple(cdfs))


def coding_ranges(density: FactorizedDensity, y: np.ndarray) -> list[tuple[int, int]]:
    """Per-channel symbol ranges: data min/max widened to the 1e-9 tails.

    ``y`` is an integer-valued [C,h,w] array.  The widened range keeps the
    tables usable for any tensor the density realistically produces while
    clipping mass below ``TAIL_MASS`` per side.  Results are clamped to the
    int16 wire format.
    """
    if y.ndim != 3 or y.shape[0] != density.channels:
        raise ValueError(f"expected [C={density.channels},h,w] tensor, got shape {y.shape}")
    c = density.channels
    span = 64
    while True:
        xs = np.arange(-span, span + 1, dtype=np.float64)
        lo_mass = density.cdf_numpy(np.tile(xs - 0.5, (c, 1)))
        hi_mass = 1.0 - density.cdf_numpy(np.tile(xs + 0.5, (c, 1)))
        if span >= 1 << 14 or (np.all(lo_mass[:, 0] <= TAIL_MASS) and np.all(hi_mass[:, -1] <= TAIL_MASS)):
            break
        span *= 2
    ranges = []
    for ch in range(c):
        below = np.nonzero(lo_mass[ch] <= TAIL_MASS)[0]
        above = np.nonzero(hi_mass[ch] <= TAIL_MASS)[0]
        q_lo = int(xs[below[-1]]) if below.size else -span
        q_hi = int(xs[above[0]]) if above.size else span
        lo = min(q_lo, int(y[ch].min()))
        hi = max(q_hi, int(y[ch].max()))
        ranges.append((max(lo, -(1 << 15)), min(hi, (1 << 15) - 1)))
    return ranges


# -- entropy coding ------------------------------------------------------


def ans_encode(y: np.ndarray, table: CdfTable) -> bytes:
    """Losslessly code an integer [C,h,w] tensor; symbols must be in range."""
    y = np.asarray(y)
    if y.ndim != 3 or y.shape[0] != table.channels:
        raise ValueError(f"expected [C={table.channels},h,w] integer tensor, got shape {y.shape}")
    starts = []
    freqs = []
    for c in range(table.channels):
        sym = y[c].reshape(-1).astype(np.int64)
        idx = sym - table.offsets[c]
        if idx.min(initial=0) < 0 or idx.max(initial=0) >= table.counts[c]:
            bad = sym[(idx < 0) | (idx >= table.counts[c])][0]
            raise ValueError(f"symbol {bad} outside table range {table.ranges()[c]} in channel {c}")
        cdf = np.asarray(table.cdfs[c], dtype=np.int64)
        starts.append(cdf[idx])
        freqs.append(cdf[idx + 1] - cdf[idx])
    return rans.encode(np.concatenate(starts), np.concatenate(freqs))


def ans_decode(payload: bytes, table: CdfTable, shape: tuple[int, int, int]) -> np.ndarray:
    """Invert :func:`ans_encode`; raises FormatError on corrupt payloads."""
    c, h, w = shape
    if c != table.channels:
        raise ValueError(f"shape has {c} channels but table has {table.channels}")
    per_channel = h * w
    symbols = rans.decode(payload, c * per_channel, table, per_channel)
    return symbols.reshape(c, h, w)
