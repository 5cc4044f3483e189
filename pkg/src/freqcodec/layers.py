"""Network building blocks: GDN/IGDN, residual blocks, and the two-branch
octave layers with wavelet inter-frequency links.

Classic octave convolutions route information between the frequency
branches with average pooling downward and nearest-neighbor upsampling
upward; the layers here use a fixed Haar filter on the way down and a
pixel-shuffle convolution on the way up instead (that variant is not
implemented).

Every convolution in the codec is bias-free.  A layer is a small object
holding named :class:`~freqcodec.optim.Parameter` instances plus a forward
method; ``parameters()`` yields them in registration order, which is also
the deterministic initialization order.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from . import wavelet
from .optim import Parameter
from .tensor import Tensor

GDN_BETA_OFFSET = 1e-6


def he_init(rng: np.random.Generator, cout: int, cin: int, k: int, dtype) -> np.ndarray:
    """Fan-in scaled normal init for a [cout, cin, k, k] conv weight.

    Unit gain rather than the ReLU-family 2.0: every octave layer adds two
    comparable-variance branches, so gain 2 compounds into exploding
    activations over the stack.
    """
    std = math.sqrt(1.0 / (cin * k * k))
    return (rng.standard_normal((cout, cin, k, k)) * std).astype(dtype)


class Conv2d:
    """Strided 2-D convolution, never with bias."""

    def __init__(self, name: str, cin: int, cout: int, k: int, stride: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.stride = stride
        self.weight = Parameter(f"{name}.w", he_init(rng, cout, cin, k, dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight.tensor, stride=self.stride)

    def parameters(self) -> Iterator[Parameter]:
        yield self.weight


class Conv3PS:
    """3x3 convolution to 4x channels followed by a 2x pixel shuffle."""

    def __init__(self, name: str, cin: int, cout: int, rng, dtype=np.float32):
        self.conv = Conv2d(name, cin, 4 * cout, 3, 1, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.pixel_shuffle(self.conv(x))

    def parameters(self) -> Iterator[Parameter]:
        yield from self.conv.parameters()


class Gdn:
    """Generalized divisive normalization over channels.

    y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2); the inverse form
    multiplies instead of divides.  beta and gamma are stored through a
    squared reparameterization so positivity is structural: beta = b^2 +
    1e-6, gamma = g^2.
    """

    def __init__(self, name: str, channels: int, inverse: bool = False, dtype=np.float32):
        self.inverse = inverse
        self.channels = channels
        self.beta_raw = Parameter(f"{name}.beta_raw", np.ones(channels, dtype=dtype))
        g0 = (math.sqrt(0.1) * np.eye(channels)).astype(dtype)
        self.gamma_raw = Parameter(f"{name}.gamma_raw", g0)

    def __call__(self, x: Tensor) -> Tensor:
        c = x.shape[-3]
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        b = self.beta_raw.tensor
        g = self.gamma_raw.tensor
        beta = b * b + GDN_BETA_OFFSET
        gamma_kernel = T.reshape(g * g, (c, c, 1, 1))
        norm = T.conv2d(x * x, gamma_kernel, stride=1) + T.reshape(beta, (c, 1, 1))
        exponent = 0.5 if self.inverse else -0.5
        return x * T.pow_const(norm, exponent)

    def parameters(self) -> Iterator[Parameter]:
        yield self.beta_raw
        yield self.gamma_raw


class ResidualBlockDown:
    """main: Conv3s2 -> LReLU -> Conv3 -> LReLU; skip: Conv1s2; output is their sum."""

    def __init__(self, name: str, cin: int, cout: int, rng, slope: float = 0.01, dtype=np.float32):
        self.slope = slope
        self.conv1 = Conv2d(f"{name}.conv1", cin, cout, 3, 2, rng, dtype)
        self.conv2 = Conv2d(f"{name}.conv2", cout, cout, 3, 1, rng, dtype)
        self.skip = Conv2d(f"{name}.skip", cin, cout, 1, 2, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.leaky_relu(self.conv1(x), self.slope)
        h = T.leaky_relu(self.conv2(h), self.slope)
        return h + self.skip(x)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.conv1.parameters()
        yield from self.conv2.parameters()
        yield from self.skip.parameters()


class ResidualBlockUp:
    """Upsampling twin: Conv3PS replaces both strided convs of the down block."""

    def __init__(self, name: str, cin: int, cout: int, rng, slope: float = 0.01, dtype=np.float32):
        self.slope = slope
        self.conv1 = Conv3PS(f"{name}.conv1", cin, cout, rng, dtype)
        self.conv2 = Conv2d(f"{name}.conv2", cout, cout, 3, 1, rng, dtype)
        self.skip = Conv3PS(f"{name}.skip", cin, cout, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.leaky_relu(self.conv1(x), self.slope)
        h = T.leaky_relu(self.conv2(h), self.slope)
        return h + self.skip(x)

    def parameters(self) -> Iterator[Parameter]:
        yield from self.conv1.parameters()
        yield from self.conv2.parameters()
        yield from self.skip.parameters()


class OctaveDown:
    """Analysis-side two-branch layer; both branches come out at half resolution.

    Intra-frequency updates are residual blocks; inter-frequency updates
    filter the opposite branch with a fixed Haar kernel (LL toward the low
    branch, HH toward the high branch) and then convolve.  The sums are the
    outputs.  With ``first=True`` the layer takes the single image tensor,
    routed as the high-frequency input: the low output is seeded purely by
    the LL filtering of the image.
    """

    def __init__(self, name: str, cin: int, cout: int, rng, slope: float = 0.01,
                 first: bool = False, dtype=np.float32):
        self.first = first
        self.rb_h = ResidualBlockDown(f"{name}.rb_h", cin, cout, rng, slope, dtype)
        self.conv_to_l = Conv2d(f"{name}.to_l", cin, cout, 3, 1, rng, dtype)
        if not first:
            self.rb_l = ResidualBlockDown(f"{name}.rb_l", cin, cout, rng, slope, dtype)
            self.conv_to_h = Conv2d(f"{name}.to_h", cin, cout, 3, 1, rng, dtype)

    def __call__(self, low: Tensor | None, high: Tensor) -> tuple[Tensor, Tensor]:
        if self.first:
            if low is not None:
                raise ValueError("first layer takes a single tensor")
            out_h = self.rb_h(high)
            out_l = self.conv_to_l(wavelet.haar_filter(high, "LL"))
            return out_l, out_h
        if low.shape[-2:] != high.shape[-2:]:
            raise ValueError(f"branch spatial dims differ: {low.shape} vs {high.shape}")
        out_h = self.rb_h(high) + self.conv_to_h(wavelet.haar_filter(low, "HH"))
        out_l = self.rb_l(low) + self.conv_to_l(wavelet.haar_filter(high, "LL"))
        return out_l, out_h

    def parameters(self) -> Iterator[Parameter]:
        yield from self.rb_h.parameters()
        yield from self.conv_to_l.parameters()
        if not self.first:
            yield from self.rb_l.parameters()
            yield from self.conv_to_h.parameters()


class OctaveUp:
    """Synthesis-side twin of :class:`OctaveDown`; doubles both branches.

    Inter-frequency updates use Conv3PS instead of a fixed inverse wavelet.
    With ``last=True`` only the high-frequency port exists and carries the
    RGB output: out = RB_up(high) + Conv3PS(low).
    """

    def __init__(self, name: str, cin: int, cout: int, rng, slope: float = 0.01,
                 last: bool = False, dtype=np.float32):
        self.last = last
        self.rb_h = ResidualBlockUp(f"{name}.rb_h", cin, cout, rng, slope, dtype)
        self.ps_to_h = Conv3PS(f"{name}.to_h", cin, cout, rng, dtype)
        if not last:
            self.rb_l = ResidualBlockUp(f"{name}.rb_l", cin, cout, rng, slope, dtype)
            self.ps_to_l = Conv3PS(f"{name}.to_l", cin, cout, rng, dtype)

    def __call__(self, low: Tensor, high: Tensor):
        if low.shape[-2:] != high.shape[-2:]:
            raise ValueError(f"branch spatial dims differ: {low.shape} vs {high.shape}")
        out_h = self.rb_h(high) + self.ps_to_h(low)
        if self.last:
            return out_h
        out_l = self.rb_l(low) + self.ps_to_l(high)
        return out_l, out_h

    def parameters(self) -> Iterator[Parameter]:
        yield from self.rb_h.parameters()
        yield from self.ps_to_h.parameters()
        if not self.last:
            yield from self.rb_l.parameters()
            yield from self.ps_to_l.parameters()
