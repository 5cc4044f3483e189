"""Two-layer bitstream container and ROI tiling.

Layout (all integers little-endian):

  header:   magic "FLIC" | version u8 | flags u8 | image W u32 | image H u32
            | latent h u16 | latent w u16 | C_L u16 | C_H u16 | model id (8 bytes)
  chunk:    channel count u16 | per channel (min i16, max i16) | payload len u32
            | payload bytes
  body:     base chunk if flags bit0; enhancement if bit1, either one chunk
            or (bit2) tile count u16 followed by tiles, each
            y0 u16 | x0 u16 | th u16 | tw u16 | chunk

Tiles are latent-grid rectangles, pairwise non-overlapping.  Parsing is
total: any byte string either yields a Container or raises FormatError
with the offending offset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import entropy
from .errors import FormatError

if TYPE_CHECKING:  # pragma: no cover
    from .model import CodecModel

MAGIC = b"FLIC"
VERSION = 1
FLAG_BASE = 1
FLAG_ENHANCEMENT = 2
FLAG_TILED = 4

_I16_MIN, _I16_MAX = -(1 << 15), (1 << 15) - 1


@dataclass(frozen=True)
class Header:
    width: int
    height: int
    latent_h: int
    latent_w: int
    channels_low: int
    channels_high: int
    model_id: bytes

    def __post_init__(self):
        if len(self.model_id) != 8:
            raise ValueError("model_id must be 8 bytes")


@dataclass(frozen=True)
class CodedChunk:
    """Entropy-coded integers plus the symbol ranges that rebuild the tables."""

    ranges: tuple[tuple[int, int], ...]
    payload: bytes

    def __post_init__(self):
        for lo, hi in self.ranges:
            if hi < lo:
                raise ValueError(f"empty symbol range [{lo}, {hi}]")
            if lo < _I16_MIN or hi > _I16_MAX:
                raise ValueError(f"symbol range [{lo}, {hi}] exceeds int16")


@dataclass(frozen=True)
class RoiTile:
    """A latent-grid rectangle carrying its own independently coded chunk."""

    y0: int
    x0: int
    th: int
    tw: int
    chunk: CodedChunk

    def __post_init__(self):
        if self.th <= 0 or self.tw <= 0 or self.y0 < 0 or self.x0 < 0:
            raise ValueError(f"bad tile rectangle y0={self.y0} x0={self.x0} th={self.th} tw={self.tw}")


@dataclass(frozen=True)
class Container:
    header: Header
    base: CodedChunk | None = None
    enhancement: CodedChunk | tuple[RoiTile, ...] | None = None

    @property
    def flags(self) -> int:
        f = 0
        if self.base is not None:
            f |= FLAG_BASE
        if self.enhancement is not None:
            f |= FLAG_ENHANCEMENT
            if self.tiled:
                f |= FLAG_TILED
        return f

    @property
    def tiled(self) -> bool:
        return isinstance(self.enhancement, tuple)


# -- serialization --------------------------------------------------------


def pack_chunk(chunk: CodedChunk) -> bytes:
    parts = [struct.pack("<H", len(chunk.ranges))]
    for lo, hi in chunk.ranges:
        parts.append(struct.pack("<hh", lo, hi))
    parts.append(struct.pack("<I", len(chunk.payload)))
    parts.append(chunk.payload)
    return b"".join(parts)


def serialize(c: Container) -> bytes:
    h = c.header
    if c.tiled:
        _check_tiles(c.enhancement, h.latent_h, h.latent_w)
    parts = [
        MAGIC,
        struct.pack("<BB", VERSION, c.flags),
        struct.pack("<II", h.width, h.height),
        struct.pack("<HHHH", h.latent_h, h.latent_w, h.channels_low, h.channels_high),
        h.model_id,
    ]
    if c.base is not None:
        parts.append(pack_chunk(c.base))
    if c.enhancement is not None:
        if c.tiled:
            parts.append(struct.pack("<H", len(c.enhancement)))
            for t in c.enhancement:
                parts.append(struct.pack("<HHHH", t.y0, t.x0, t.th, t.tw))
                parts.append(pack_chunk(t.chunk))
        else:
            parts.append(pack_chunk(c.enhancement))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"length overrun: wanted {n} bytes, "
                              f"{len(self.data) - self.pos} left", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _parse_chunk(r: _Reader) -> CodedChunk:
    (n_channels,) = r.unpack("<H")
    ranges = []
    for c in range(n_channels):
        lo, hi = r.unpack("<hh")
        if hi < lo:
            raise FormatError(f"channel {c}: empty symbol range [{lo}, {hi}]", offset=r.pos - 4)
        ranges.append((lo, hi))
    (plen,) = r.unpack("<I")
    payload = r.take(plen)
    return CodedChunk(tuple(ranges), payload)


def _check_tiles(tiles: Sequence[RoiTile], lat_h: int, lat_w: int, offset: int | None = None) -> None:
    painted = np.zeros((lat_h, lat_w), dtype=bool)
    for t in tiles:
        if t.y0 + t.th > lat_h or t.x0 + t.tw > lat_w:
            raise FormatError(
                f"tile y0={t.y0} x0={t.x0} th={t.th} tw={t.tw} exceeds latent grid "
                f"{lat_h}x{lat_w}", offset=offset)
        region = painted[t.y0 : t.y0 + t.th, t.x0 : t.x0 + t.tw]
        if region.any():
            raise FormatError(f"tile y0={t.y0} x0={t.x0} overlaps an earlier tile", offset=offset)
        region[:] = True


def parse(data: bytes) -> Container:
    """Total inverse of :func:`serialize`; never raises anything but FormatError."""
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    version, flags = r.unpack("<BB")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if flags & ~(FLAG_BASE | FLAG_ENHANCEMENT | FLAG_TILED):
        raise FormatError(f"unknown flag bits 0x{flags:02x}", offset=5)
    if (flags & FLAG_TILED) and not (flags & FLAG_ENHANCEMENT):
        raise FormatError("tiled flag without enhancement flag", offset=5)
    width, height = r.unpack("<II")
    lat_h, lat_w, c_l, c_h = r.unpack("<HHHH")
    model_id = r.take(8)
    try:
        header = Header(width, height, lat_h, lat_w, c_l, c_h, model_id)
    except ValueError as e:  # pragma: no cover - all fields range-checked above
        raise FormatError(str(e), offset=r.pos) from None

    base = _parse_chunk(r) if flags & FLAG_BASE else None
    enhancement = None
    if flags & FLAG_ENHANCEMENT:
        if flags & FLAG_TILED:
            (count,) = r.unpack("<H")
            tiles = []
            for _ in range(count):
                tile_offset = r.pos
                y0, x0, th, tw = r.unpack("<HHHH")
                if th == 0 or tw == 0:
                    raise FormatError(f"empty tile {th}x{tw}", offset=tile_offset)
                tiles.append(RoiTile(y0, x0, th, tw, _parse_chunk(r)))
            _check_tiles(tiles, lat_h, lat_w, offset=r.pos)
            enhancement = tuple(tiles)
        else:
            enhancement = _parse_chunk(r)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes", offset=r.pos)
    return Container(header, base, enhancement)


# -- chunk <-> tensor bridges ---------------------------------------------


def encode_chunk(y: np.ndarray, density: entropy.FactorizedDensity) -> CodedChunk:
    """Entropy-code an integer [C,h,w] tensor with ranges stored alongside."""
    ranges = entropy.coding_ranges(density, y)
    tables = entropy.build_cdf_tables(density, ranges)
    return CodedChunk(tuple(ranges), entropy.ans_encode(y, tables))


def decode_chunk(chunk: CodedChunk, density: entropy.FactorizedDensity,
                 shape: tuple[int, int, int]) -> np.ndarray:
    """Rebuild the coding tables from the stored ranges and decode."""
    tables = entropy.build_cdf_tables(density, list(chunk.ranges))
    return entropy.ans_decode(chunk.payload, tables, shape)


# -- ROI geometry ----------------------------------------------------------


def image_rect_to_latent(rect: tuple[int, int, int, int], factor: int,
                         lat_h: int, lat_w: int) -> tuple[int, int, int, int]:
    """Map an image-space (x, y, w, h) rectangle to the covering latent tile.

    Rounds outward: any latent cell whose receptive footprint intersects the
    rectangle is included.  Returns (y0, x0, th, tw) on the latent grid.
    """
    x, y, w, h = rect
    x0 = max(0, x // factor)
    y0 = max(0, y // factor)
    x1 = min(lat_w, -(-(x + w) // factor))
    y1 = min(lat_h, -(-(y + h) // factor))
    return y0, x0, y1 - y0, x1 - x0


def rects_to_mask(rects: Sequence[tuple[int, int, int, int]], factor: int,
                  lat_h: int, lat_w: int) -> np.ndarray:
    mask = np.zeros((lat_h, lat_w), dtype=bool)
    for rect in rects:
        y0, x0, th, tw = image_rect_to_latent(rect, factor, lat_h, lat_w)
        mask[y0 : y0 + th, x0 : x0 + tw] = True
    return mask


def mask_to_tiles(mask: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Decompose a boolean grid into disjoint rectangles (y0, x0, th, tw).

    Horizontal runs that repeat on consecutive rows merge vertically, so the
    decomposition is deterministic and exactly covers the mask.
    """
    h, w = mask.shape
    open_runs: dict[tuple[int, int], int] = {}
    tiles: list[tuple[int, int, int, int]] = []
    for y in range(h + 1):
        runs: set[tuple[int, int]] = set()
        if y < h:
            row = mask[y]
            x = 0
            while x < w:
                if row[x]:
                    x1 = x
                    while x1 < w and row[x1]:
                        x1 += 1
                    runs.add((x, x1))
                    x = x1
                else:
                    x += 1
        next_open: dict[tuple[int, int], int] = {}
        for run in runs:
            next_open[run] = open_runs.pop(run, y)
        for (x0, x1), y0 in open_runs.items():
            tiles.append((y0, x0, y - y0, x1 - x0))
        open_runs = next_open
    return sorted(tiles)


# -- ROI extraction ----------------------------------------------------------


def validate_rois(rois: Sequence[tuple[int, int, int, int]], width: int, height: int) -> None:
    if not rois:
        raise ValueError("need at least one ROI")
    for rect in rois:
        x, y, w, h = rect
        if w <= 0 or h <= 0:
            raise ValueError(f"ROI {rect} has non-positive area")
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"ROI {rect} outside image bounds {width}x{height}")


def extract_roi(container: Container, rois: Sequence[tuple[int, int, int, int]],
                model: "CodecModel") -> Container:
    """Re-encode the full enhancement layer as independent ROI tiles.

    The input container must carry a full (untiled) enhancement chunk.  Each
    image-space rectangle is mapped outward onto the latent grid; merged
    regions are re-coded tile by tile with the model's high-branch density,
    so the result decodes to the exact enhancement latents inside the tiles
    and zeros elsewhere.
    """
    h = container.header
    if container.enhancement is None or container.tiled:
        raise ValueError("container must carry a full enhancement chunk")
    validate_rois(rois, h.width, h.height)
    check_model_id(container, model)

    y_high = decode_chunk(container.enhancement, model.density_h,
                          (h.channels_high, h.latent_h, h.latent_w))
    mask = rects_to_mask(rois, model.cfg.downsampling, h.latent_h, h.latent_w)
    tiles = []
    for y0, x0, th, tw in mask_to_tiles(mask):
        sub = np.ascontiguousarray(y_high[:, y0 : y0 + th, x0 : x0 + tw])
        tiles.append(RoiTile(y0, x0, th, tw, encode_chunk(sub, model.density_h)))
    return Container(h, container.base, tuple(tiles))


def assemble_enhancement(container: Container, model: "CodecModel") -> np.ndarray:
    """Decode the enhancement latents: exact inside tiles, zero elsewhere."""
    h = container.header
    if container.enhancement is None:
        raise ValueError("container has no enhancement layer")
    if not container.tiled:
        return decode_chunk(container.enhancement, model.density_h,
                            (h.channels_high, h.latent_h, h.latent_w))
    out = np.zeros((h.channels_high, h.latent_h, h.latent_w), dtype=np.int64)
    for t in container.enhancement:
        out[:, t.y0 : t.y0 + t.th, t.x0 : t.x0 + t.tw] = decode_chunk(
            t.chunk, model.density_h, (h.channels_high, t.th, t.tw))
    return out


def check_model_id(container: Container, model: "CodecModel") -> None:
    got = model.model_id()
    want = container.header.model_id
    if got != want:
        raise ValueError(
            f"container was produced by model {want.hex()} but the loaded model is {got.hex()}")
