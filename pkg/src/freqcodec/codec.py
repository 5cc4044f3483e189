"""High-level encode/decode API, the three reconstruction modes, and the
inspection tools (latent tiling, Fourier view).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
import numpy as np

from . import bitstream as BS
from . import imageio
from . import tensor as T
from .model import CodecModel, LatentPair
from .tensor import Tensor

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class RoiSet:
    """Image-space rectangles (x, y, w, h in pixels) within given bounds."""

    rects: tuple[tuple[int, int, int, int], ...]
    width: int
    height: int

    def __post_init__(self):
        BS.validate_rois(self.rects, self.width, self.height)


def encode_image(img: np.ndarray, model: CodecModel) -> tuple[BS.Container, dict]:
    """Analyze, round-quantize, and entropy-code an image.

    ``img`` is float [3,H,W] in [0,1] (or uint8).  Returns the container
    with a full enhancement layer plus rate stats; ``bpp_*`` counts coded
    payload bits per pixel, ``bpp_container`` includes all framing bytes.
    """
    if img.dtype == np.uint8:
        img = imageio.to_float(img)
    if img.ndim != 3 or img.shape[0] != model.cfg.image_channels:
        raise ValueError(f"expected [3,H,W] image, got shape {img.shape}")
    _, height, width = img.shape
    with T.no_grad():
        y = model.analyze(Tensor(img.astype(model.dtype)))
    y_low = T.round_half_away(y.low.data).astype(np.int64)
    y_high = T.round_half_away(y.high.data).astype(np.int64)

    base = BS.encode_chunk(y_low, model.density_l)
    enh = BS.encode_chunk(y_high, model.density_h)
    lat_h, lat_w = y_low.shape[1], y_low.shape[2]
    header = BS.Header(width, height, lat_h, lat_w,
                       y_low.shape[0], y_high.shape[0], model.model_id())
    container = BS.Container(header, base, enh)

    n_pixels = width * height
    bpp_base = len(base.payload) * 8 / n_pixels
    bpp_enh = len(enh.payload) * 8 / n_pixels
    stats = {
        "bpp_base": bpp_base,
        "bpp_enh": bpp_enh,
        "bpp_total": bpp_base + bpp_enh,
        "bpp_container": len(BS.serialize(container)) * 8 / n_pixels,
        "width": width,
        "height": height,
    }
    return container, stats


def decode_latents(container: BS.Container, model: CodecModel, mode: str = "full",
                   rois: RoiSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Decode the integer latent pair for the requested reconstruction mode.

    ``base``: the enhancement branch is all zeros.  ``full``: requires an
    untiled enhancement chunk.  ``roi``: tiles are assembled as coded (for a
    full-enhancement container the given ROIs are extracted first), exact
    inside tiles and zero outside.
    """
    BS.check_model_id(container, model)
    h = container.header
    if container.base is None:
        raise ValueError("container has no base layer")
    y_low = BS.decode_chunk(container.base, model.density_l,
                            (h.channels_low, h.latent_h, h.latent_w))
    if mode == "base":
        return y_low, np.zeros((h.channels_high, h.latent_h, h.latent_w), dtype=np.int64)
    if mode == "full":
        if container.enhancement is None or container.tiled:
            raise ValueError("full decode requires a complete enhancement chunk")
        return y_low, BS.assemble_enhancement(container, model)
    if mode == "roi":
        if container.enhancement is None:
            raise ValueError("roi decode requires an enhancement layer")
        if not container.tiled:
            if rois is None:
                raise ValueError("roi decode of a full container needs a RoiSet")
            container = BS.extract_roi(container, rois.rects, model)
        return y_low, BS.assemble_enhancement(container, model)
    raise ValueError(f"unknown decode mode {mode!r}")


def synthesize_from_latents(y_low: np.ndarray, y_high: np.ndarray, model: CodecModel,
                            out_hw: tuple[int, int]) -> np.ndarray:
    """Run the synthesis network on integer latents; export-quantized uint8."""
    with T.no_grad():
        pair = LatentPair(Tensor(y_low.astype(model.dtype)), Tensor(y_high.astype(model.dtype)))
        out = model.synthesize(pair, out_hw=out_hw)
    return imageio.to_uint8(out.data)


def decode_image(container: BS.Container, model: CodecModel, mode: str = "full",
                 rois: RoiSet | None = None) -> np.ndarray:
    """Reconstruct a uint8 [3,H,W] image in the requested mode."""
    y_low, y_high = decode_latents(container, model, mode, rois)
    h = container.header
    return synthesize_from_latents(y_low, y_high, model, (h.height, h.width))


# -- inspection -----------------------------------------------------------


def tile_channels(y: np.ndarray) -> np.ndarray:
    """Tile a [C,h,w] tensor's nonzero channels into a near-square grid.

    Channels are min-max normalized to [0,1] individually (constant channels
    map to 0.5); all-zero channels are dropped; leftover grid cells stay
    black.  An all-zero tensor yields an empty image with a warning.
    """
    y = np.asarray(y, dtype=np.float64)
    keep = [c for c in range(y.shape[0]) if np.any(y[c] != 0)]
    if not keep:
        warnings.warn("all latent channels are zero; nothing to visualize")
        return np.zeros((0, 0))
    h, w = y.shape[1], y.shape[2]
    cols = math.ceil(math.sqrt(len(keep)))
    rows = math.ceil(len(keep) / cols)
    grid = np.zeros((rows * h, cols * w))
    for i, c in enumerate(keep):
        ch = y[c]
        lo, hi = ch.min(), ch.max()
        tile = np.full_like(ch, 0.5) if hi == lo else (ch - lo) / (hi - lo)
        r, col = divmod(i, cols)
        grid[r * h : (r + 1) * h, col * w : (col + 1) * w] = tile
    return grid


def visualize_latents(y_low: np.ndarray, y_high: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-branch tiled grayscale views of the latent pair."""
    return tile_channels(y_low), tile_channels(y_high)


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def spectrum(img: np.ndarray) -> np.ndarray:
    """Centered log-magnitude Fourier view of an image, normalized to [0,1].

    Color images are converted to luma first; dims are zero-padded up to the
    next power of two so the transform stays a clean radix-2 size.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        gray = (LUMA_WEIGHTS[0] * img[0] + LUMA_WEIGHTS[1] * img[1] + LUMA_WEIGHTS[2] * img[2])
    elif img.ndim == 2:
        gray = img
    else:
        raise ValueError(f"expected [3,H,W] or [H,W], got shape {img.shape}")
    h, w = gray.shape
    padded = np.zeros((_next_pow2(h), _next_pow2(w)))
    padded[:h, :w] = gray
    mag = np.log1p(np.abs(np.fft.fftshift(np.fft.fft2(padded))))
    peak = mag.max()
    return mag / peak if peak > 0 else mag


def synthesis_influence_bound(tile: tuple[int, int, int, int], stages: int) -> tuple[int, int, int, int]:
    """Pixel rectangle that a latent tile can influence through synthesis.

    Conservative interval arithmetic over the synthesis stack: the initial
    3x3 convolution widens the tile by one cell, then every upsampling stage
    maps inclusive cell bounds [a, b] to [2a - 3, 2b + 4] (Conv3PS spreads
    to [2a-2, 2b+3], the trailing 3x3 adds one more).  Returns inclusive-
    exclusive pixel bounds (y0, x0, y1, x1), unclamped.
    """
    y0, x0, th, tw = tile
    lo_y, hi_y = y0 - 1, (y0 + th - 1) + 1
    lo_x, hi_x = x0 - 1, (x0 + tw - 1) + 1
    for _ in range(stages):
        lo_y, hi_y = 2 * lo_y - 3, 2 * hi_y + 4
        lo_x, hi_x = 2 * lo_x - 3, 2 * hi_x + 4
    return lo_y, lo_x, hi_y + 1, hi_x + 1
