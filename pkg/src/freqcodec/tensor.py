"""Dense tensors with reverse-mode automatic differentiation.

The operation set is exactly what the codec needs: strided 3x3/1x1
convolutions without bias, fixed-kernel depthwise filtering, pixel
shuffling, a handful of pointwise nonlinearities, per-channel matrix
chains for the entropy model, and scalar reductions.  Tensors wrap numpy
arrays; recording a graph only happens while gradients are enabled and
some input requires them.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Graph recording is toggled per thread: concurrent inference threads must
# not fight over a shared flag.
_grad_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    prev = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    """A dense real array, optionally carrying a gradient.

    ``data`` is float32 or float64, row-major, channel-first for images
    and feature maps.  ``grad`` has the same shape as ``data`` once the
    tensor has participated in a backward pass.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph --------------------------------------------------------

    def _needs_graph(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def backward(self) -> None:
        """Backpropagate from a scalar, accumulating into ``grad`` fields.

        Gradients sum across multiple uses of the same tensor.  Raises if
        this tensor is not a scalar.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.data.shape}")

        # Iterative topological order; training graphs are deep enough to
        # overflow the recursion limit.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p._needs_graph():
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent._needs_graph():
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g

    # -- operators ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, self), mul(self, -1.0))

    def __truediv__(self, other):
        return div(self, other)

    def __pow__(self, p):
        return pow_const(self, p)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p._needs_graph() for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise arithmetic (numpy broadcasting rules) -----------------


def add(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _wrap(b, a)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _wrap(b, a)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), backward)


def div(a: Tensor, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _wrap(b, a)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _make(out, (a, b), backward)


def pow_const(x: Tensor, p: float) -> Tensor:
    out = x.data**p

    def backward(g):
        return (g * p * x.data ** (p - 1.0),)

    return _make(out, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _make(out, (x,), backward)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def backward(g):
        return (g / x.data,)

    return _make(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_np(x.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # Evaluate through exp of the negative magnitude only; stable at both tails.
    pos = x >= 0
    z = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _make(out, (x,), backward)


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(np.zeros((), dtype=x.dtype), x.data)

    def backward(g):
        return (g * _sigmoid_np(x.data),)

    return _make(out, (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """y = x for x >= 0 else slope * x; the subgradient at 0 is 1."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must be in (0, 1), got {slope}")
    factor = np.where(x.data >= 0, np.asarray(1.0, x.dtype), np.asarray(slope, x.dtype))
    out = x.data * factor

    def backward(g):
        return (g * factor,)

    return _make(out, (x,), backward)


def lower_bound(x: Tensor, bound: float) -> Tensor:
    """max(x, bound), but gradients that would push x upward still pass.

    Used as the likelihood floor: a plain max would silently freeze any
    value pinned at the bound.
    """
    out = np.maximum(x.data, bound)

    def backward(g):
        passthrough = (x.data >= bound) | (g < 0)
        return (g * passthrough,)

    return _make(out, (x,), backward)


def round_ste(x: Tensor) -> Tensor:
    """Round half away from zero; straight-through gradient."""
    out = round_half_away(x.data)

    def backward(g):
        return (g,)

    return _make(out, (x,), backward)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# -- shape manipulation -------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def backward(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), backward)


def moveaxis(x: Tensor, src: int, dst: int) -> Tensor:
    out = np.moveaxis(x.data, src, dst)

    def backward(g):
        return (np.moveaxis(g, dst, src),)

    return _make(out, (x,), backward)


def crop2d(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w window of the two trailing axes."""
    if h > x.shape[-2] or w > x.shape[-1]:
        raise ValueError(f"crop {h}x{w} exceeds input {x.shape[-2]}x{x.shape[-1]}")
    out = np.ascontiguousarray(x.data[..., :h, :w])

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[..., :h, :w] = g
        return (gx,)

    return _make(out, (x,), backward)


def replicate_pad_br(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Edge-replicate the bottom/right borders of the two trailing axes."""
    if pad_h == 0 and pad_w == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 2) + [(0, pad_h), (0, pad_w)]
    out = np.pad(x.data, widths, mode="edge")

    def backward(g):
        gx = g[..., : x.shape[-2], : x.shape[-1]].copy()
        if pad_h:
            gx[..., -1, :] += g[..., x.shape[-2] :, : x.shape[-1]].sum(axis=-2)
        if pad_w:
            gx[..., :, -1] += g[..., : x.shape[-2], x.shape[-1] :].sum(axis=-1)
        if pad_h and pad_w:
            gx[..., -1, -1] += g[..., x.shape[-2] :, x.shape[-1] :].sum(axis=(-2, -1))
        return (gx,)

    return _make(out, (x,), backward)


# -- reductions ---------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return _make(out, (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)

    def backward(g):
        return (np.broadcast_to(g / n, x.shape).astype(x.dtype, copy=True),)

    return _make(out, (x,), backward)


# -- convolutions -------------------------------------------------------


def _to_nchw(x: Tensor) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x.data[None], True
    if x.ndim == 4:
        return x.data, False
    raise ValueError(f"expected a 3-D [C,H,W] or 4-D [N,C,H,W] tensor, got shape {x.shape}")


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D cross-correlation without bias; same-style padding by default.

    ``x`` is [C,H,W] or [N,C,H,W]; ``w`` is [Cout,Cin,k,k] with k in {1,3}
    and stride in {1,2}.  Default padding is k//2, so the output spatial
    dims are ceil(H/stride) x ceil(W/stride).
    """
    xd, squeezed = _to_nchw(x)
    if w.ndim != 4 or w.shape[-1] != w.shape[-2]:
        raise ValueError(f"weight must be [Cout,Cin,k,k], got shape {w.shape}")
    k = w.shape[-1]
    if k not in (1, 3):
        raise ValueError(f"kernel size must be 1 or 3, got {k}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if xd.shape[1] != w.shape[1]:
        raise ValueError(f"input has {xd.shape[1]} channels but weight expects {w.shape[1]}")
    p = k // 2 if padding is None else padding

    n, cin, h_in, w_in = xd.shape
    cout = w.shape[0]
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = windows.shape[2], windows.shape[3]
    cols = np.ascontiguousarray(windows.transpose(0, 1, 4, 5, 2, 3)).reshape(n, cin * k * k, oh * ow)
    w2 = w.data.reshape(cout, cin * k * k)
    out = np.matmul(w2, cols).reshape(n, cout, oh, ow)
    if squeezed:
        out = out[0]

    def backward(g):
        gm = (g[None] if squeezed else g).reshape(n, cout, oh * ow)
        gw = np.tensordot(gm, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gcols = np.matmul(w2.T, gm).reshape(n, cin, k, k, oh, ow)
        gxp = np.zeros_like(xp)
        for a in range(k):
            for b in range(k):
                gxp[:, :, a : a + stride * oh : stride, b : b + stride * ow : stride] += gcols[:, :, a, b]
        gx = gxp[:, :, p : p + h_in, p : p + w_in] if p else gxp
        return (gx[0] if squeezed else gx), gw

    return _make(out, (x, w), backward)


def depthwise_conv2d(x: Tensor, kernel: np.ndarray, stride: int = 1) -> Tensor:
    """Per-channel valid convolution with one fixed (non-learned) 2-D kernel."""
    xd, squeezed = _to_nchw(x)
    kernel = np.asarray(kernel, dtype=xd.dtype)
    kh, kw = kernel.shape
    if xd.shape[2] < kh or xd.shape[3] < kw:
        raise ValueError(f"input {xd.shape[2]}x{xd.shape[3]} smaller than kernel {kh}x{kw}")
    windows = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = windows.shape[2], windows.shape[3]
    out = np.einsum("nchwab,ab->nchw", windows, kernel, optimize=True)
    if squeezed:
        out = out[0]

    def backward(g):
        gd = g[None] if squeezed else g
        gx = np.zeros_like(xd)
        for a in range(kh):
            for b in range(kw):
                gx[:, :, a : a + stride * oh : stride, b : b + stride * ow : stride] += kernel[a, b] * gd
        return (gx[0] if squeezed else gx,)

    return _make(out, (x,), backward)


def pixel_shuffle(x: Tensor) -> Tensor:
    """[4C,H,W] -> [C,2H,2W] with out[c, 2i+a, 2j+b] = in[4c+2a+b, i, j]."""
    xd, squeezed = _to_nchw(x)
    n, c4, h, w = xd.shape
    if c4 % 4:
        raise ValueError(f"channel count {c4} not divisible by 4")
    c = c4 // 4
    out = xd.reshape(n, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, 2 * h, 2 * w)
    if squeezed:
        out = out[0]

    def backward(g):
        gd = g[None] if squeezed else g
        gx = gd.reshape(n, c, h, 2, w, 2).transpose(0, 1, 3, 5, 2, 4).reshape(n, c4, h, w)
        return (gx[0] if squeezed else gx,)

    return _make(np.ascontiguousarray(out), (x,), backward)


def pixel_unshuffle(x: Tensor) -> Tensor:
    """Inverse of :func:`pixel_shuffle`: [C,2H,2W] -> [4C,H,W]."""
    xd, squeezed = _to_nchw(x)
    n, c, h2, w2 = xd.shape
    if h2 % 2 or w2 % 2:
        raise ValueError(f"spatial dims must be even, got {h2}x{w2}")
    h, w = h2 // 2, w2 // 2
    out = xd.reshape(n, c, h, 2, w, 2).transpose(0, 1, 3, 5, 2, 4).reshape(n, 4 * c, h, w)
    if squeezed:
        out = out[0]

    def backward(g):
        gd = g[None] if squeezed else g
        gx = gd.reshape(n, c, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h2, w2)
        return (np.ascontiguousarray(gx[0] if squeezed else gx),)

    return _make(np.ascontiguousarray(out), (x,), backward)


def matmul_cw(w: Tensor, x: Tensor) -> Tensor:
    """Channel-wise batched matmul: [C,O,I] @ [C,I,M] -> [C,O,M]."""
    if w.ndim != 3 or x.ndim != 3 or w.shape[0] != x.shape[0] or w.shape[2] != x.shape[1]:
        raise ValueError(f"incompatible shapes {w.shape} @ {x.shape}")
    out = np.matmul(w.data, x.data)

    def backward(g):
        gw = np.matmul(g, x.data.transpose(0, 2, 1))
        gx = np.matmul(w.data.transpose(0, 2, 1), g)
        return gw, gx

    return _make(out, (w, x), backward)


# -- finiteness helper ---------------------------------------------------


def assert_finite(x: Tensor, what: str = "tensor") -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError(f"{what} contains non-finite values")
    return x
