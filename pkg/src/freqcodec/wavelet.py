"""Fixed 2x2 Haar filtering used by the inter-frequency updates.

The four half-scaled Haar kernels form an orthonormal basis over each
aligned 2x2 block, so the 4-band analysis/synthesis pair reconstructs
exactly; the codec itself only ever uses the LL and HH filters, the full
bank exists as a verification oracle.  Kernels are constants and are
never trained.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

HAAR_KERNELS: dict[str, np.ndarray] = {
    "LL": 0.5 * np.array([[1.0, 1.0], [1.0, 1.0]]),
    "LH": 0.5 * np.array([[1.0, 1.0], [-1.0, -1.0]]),
    "HL": 0.5 * np.array([[1.0, -1.0], [1.0, -1.0]]),
    "HH": 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]),
}

_BAND_ORDER = ("LL", "LH", "HL", "HH")


def haar_filter(x: Tensor, kernel: str) -> Tensor:
    """Depthwise 2x2 stride-2 filtering with the named Haar kernel.

    Odd trailing dims are edge-replicated on the bottom/right first, so the
    output is always [C, ceil(H/2), ceil(W/2)].  Differentiable w.r.t. x.
    """
    if kernel not in HAAR_KERNELS:
        raise ValueError(f"unknown Haar kernel {kernel!r}")
    x = T.replicate_pad_br(x, x.shape[-2] % 2, x.shape[-1] % 2)
    return T.depthwise_conv2d(x, HAAR_KERNELS[kernel].astype(x.dtype), stride=2)


def haar_analysis4(x: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Split into the four Haar bands (LL, LH, HL, HH), each half-size."""
    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise ValueError(f"spatial dims must be even, got {x.shape[-2]}x{x.shape[-1]}")
    return tuple(haar_filter(x, b) for b in _BAND_ORDER)


def haar_synthesis4(bands: tuple[Tensor, Tensor, Tensor, Tensor]) -> Tensor:
    """Invert :func:`haar_analysis4` exactly (orthonormal bank transpose)."""
    shapes = {b.shape for b in bands}
    if len(shapes) != 1:
        raise ValueError(f"band shapes differ: {sorted(shapes)}")
    ll = bands[0]
    h, w = ll.shape[-2], ll.shape[-1]
    lead = ll.shape[:-2]
    out = np.zeros(lead + (2 * h, 2 * w), dtype=ll.dtype)
    for band, name in zip(bands, _BAND_ORDER):
        k = HAAR_KERNELS[name]
        for a in (0, 1):
            for b in (0, 1):
                out[..., a::2, b::2] += k[a, b] * band.data
    return Tensor(out)
