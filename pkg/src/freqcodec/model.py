"""Full codec model: two-branch analysis/synthesis networks, configuration
presets, deterministic initialization, and the binary weight format.

Analysis stacks octave-down layers (the first takes the RGB image on its
high-frequency port) and ends with exactly one GDN per branch.  Synthesis
applies a per-branch 3x3 convolution and IGDN, then octave-up layers whose
last stage has a single 3-channel output port.  No convolution anywhere
carries a bias.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from . import tensor as T
from .entropy import FactorizedDensity
from .errors import FormatError
from .layers import Conv2d, Gdn, OctaveDown, OctaveUp
from .optim import Parameter
from .tensor import Tensor

WEIGHTS_MAGIC = b"FLCW"
WEIGHTS_VERSION = 1
_DTYPE_CODES = {0: np.float32, 1: np.float64}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


@dataclass(frozen=True)
class CodecConfig:
    """Architecture hyperparameters; ``channels[i]`` is stage i's output width."""

    channels: tuple[int, ...] = (32, 64, 96, 128)
    lrelu_slope: float = 0.01
    image_channels: int = 3

    def __post_init__(self):
        if len(self.channels) < 2:
            raise ValueError("need at least 2 stages")
        if any(c <= 0 for c in self.channels):
            raise ValueError(f"channel counts must be positive: {self.channels}")

    @property
    def stages(self) -> int:
        return len(self.channels)

    @property
    def latent_channels(self) -> int:
        return self.channels[-1]

    @property
    def downsampling(self) -> int:
        return 1 << self.stages


# tiny: fast enough for training smoke tests; toy: default desk-scale model;
# large: full-scale architecture, about 30M parameters.
PRESETS: dict[str, CodecConfig] = {
    "tiny": CodecConfig(channels=(8, 16)),
    "toy": CodecConfig(),
    "large": CodecConfig(channels=(64, 128, 208, 288)),
}


def preset(name: str) -> CodecConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass
class LatentPair:
    """The two-branch latent representation; both share spatial dims."""

    low: Tensor
    high: Tensor

    def __post_init__(self):
        if self.low.shape[-2:] != self.high.shape[-2:]:
            raise ValueError(f"branch spatial dims differ: {self.low.shape} vs {self.high.shape}")


class CodecModel:
    """All learned parameters plus the architecture configuration."""

    def __init__(self, cfg: CodecConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        ch = cfg.channels
        s = cfg.stages
        slope = cfg.lrelu_slope

        self.analysis: list[OctaveDown] = []
        for i in range(s):
            cin = cfg.image_channels if i == 0 else ch[i - 1]
            self.analysis.append(OctaveDown(
                f"analysis.{i}", cin, ch[i], rng, slope, first=(i == 0), dtype=dtype))
        c_lat = cfg.latent_channels
        self.gdn_l = Gdn("analysis.gdn_l", c_lat, dtype=dtype)
        self.gdn_h = Gdn("analysis.gdn_h", c_lat, dtype=dtype)

        self.syn_conv_l = Conv2d("synthesis.conv_l", c_lat, c_lat, 3, 1, rng, dtype)
        self.syn_conv_h = Conv2d("synthesis.conv_h", c_lat, c_lat, 3, 1, rng, dtype)
        self.igdn_l = Gdn("synthesis.igdn_l", c_lat, inverse=True, dtype=dtype)
        self.igdn_h = Gdn("synthesis.igdn_h", c_lat, inverse=True, dtype=dtype)
        self.synthesis: list[OctaveUp] = []
        for j in range(s):
            cin = c_lat if j == 0 else ch[s - 1 - j]
            cout = cfg.image_channels if j == s - 1 else ch[s - 2 - j]
            self.synthesis.append(OctaveUp(
                f"synthesis.{j}", cin, cout, rng, slope, last=(j == s - 1), dtype=dtype))

        self.density_l = FactorizedDensity("density_l", c_lat, rng, dtype=dtype)
        self.density_h = FactorizedDensity("density_h", c_lat, rng, dtype=dtype)

    # -- parameter access ----------------------------------------------

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for layer in self.analysis:
            out.extend(layer.parameters())
        out.extend(self.gdn_l.parameters())
        out.extend(self.gdn_h.parameters())
        out.extend(self.syn_conv_l.parameters())
        out.extend(self.syn_conv_h.parameters())
        out.extend(self.igdn_l.parameters())
        out.extend(self.igdn_h.parameters())
        for layer in self.synthesis:
            out.extend(layer.parameters())
        out.extend(self.density_l.parameters())
        out.extend(self.density_h.parameters())
        return out

    def named_parameters(self) -> dict[str, Parameter]:
        named = {}
        for p in self.parameters():
            if p.name in named:
                raise AssertionError(f"duplicate parameter name {p.name}")
            named[p.name] = p
        return named

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- transforms ------------------------------------------------------

    def analyze(self, x: Tensor) -> LatentPair:
        """Image [.,3,H,W] -> latent pair at 1/2^stages resolution, post-GDN."""
        c_axis = x.ndim - 3
        if x.ndim not in (3, 4) or x.shape[c_axis] != self.cfg.image_channels:
            raise ValueError(f"expected [{self.cfg.image_channels},H,W] image tensor, got shape {x.shape}")
        h, w = x.shape[-2], x.shape[-1]
        if h < self.cfg.downsampling or w < self.cfg.downsampling:
            raise ValueError(
                f"image {h}x{w} smaller than the {self.cfg.downsampling}x downsampling factor")
        low, high = self.analysis[0](None, x)
        for layer in self.analysis[1:]:
            low, high = layer(low, high)
        return LatentPair(low=self.gdn_l(low), high=self.gdn_h(high))

    def synthesize(self, y: LatentPair, out_hw: tuple[int, int] | None = None) -> Tensor:
        """Latent pair -> RGB tensor; optionally cropped to the original dims.

        The output is linear-valued; clamping to [0,1] happens only at the
        metrics/export boundary.
        """
        c_axis = y.low.ndim - 3
        if y.low.shape[c_axis] != self.cfg.latent_channels or y.high.shape[c_axis] != self.cfg.latent_channels:
            raise ValueError(
                f"latent channels {y.low.shape[c_axis]}/{y.high.shape[c_axis]} "
                f"do not match config ({self.cfg.latent_channels})")
        low = self.igdn_l(self.syn_conv_l(y.low))
        high = self.igdn_h(self.syn_conv_h(y.high))
        for layer in self.synthesis[:-1]:
            low, high = layer(low, high)
        out = self.synthesis[-1](low, high)
        if out_hw is not None:
            out = T.crop2d(out, out_hw[0], out_hw[1])
        return out

    def latent_shape(self, image_h: int, image_w: int) -> tuple[int, int]:
        h, w = image_h, image_w
        for _ in range(self.cfg.stages):
            h, w = -(-h // 2), -(-w // 2)
        return h, w

    # -- identity ----------------------------------------------------------

    def weight_bytes(self) -> bytes:
        import io

        buf = io.BytesIO()
        _write_weights(self, buf)
        return buf.getvalue()

    def model_id(self) -> bytes:
        """8-byte identity hash of the serialized weights."""
        return hashlib.sha256(self.weight_bytes()).digest()[:8]


def init_model(cfg: CodecConfig, seed: int = 0, dtype=np.float32) -> CodecModel:
    """Fresh model; bit-identical for identical (cfg, seed, dtype)."""
    return CodecModel(cfg, seed=seed, dtype=dtype)


def parameter_count(cfg: CodecConfig) -> int:
    """Closed-form parameter census from the config arithmetic alone."""
    ch = cfg.channels
    s = cfg.stages
    img = cfg.image_channels
    c_lat = ch[-1]

    def rb_down(cin, cout):
        return 9 * cin * cout + 9 * cout * cout + cin * cout

    def rb_up(cin, cout):
        return 36 * cin * cout + 9 * cout * cout + 36 * cin * cout

    total = 0
    for i in range(s):
        cin = img if i == 0 else ch[i - 1]
        total += rb_down(cin, ch[i]) + 9 * cin * ch[i]  # rb_h + conv_to_l
        if i > 0:
            total += rb_down(cin, ch[i]) + 9 * cin * ch[i]  # rb_l + conv_to_h
    total += 2 * (c_lat + c_lat * c_lat)  # analysis GDNs
    total += 2 * 9 * c_lat * c_lat  # synthesis per-branch Conv3
    total += 2 * (c_lat + c_lat * c_lat)  # IGDNs
    for j in range(s):
        cin = c_lat if j == 0 else ch[s - 1 - j]
        cout = img if j == s - 1 else ch[s - 2 - j]
        total += rb_up(cin, cout) + 36 * cin * cout  # rb_h + ps_to_h
        if j < s - 1:
            total += rb_up(cin, cout) + 36 * cin * cout  # rb_l + ps_to_l
    # densities: matrices 1*3+3*3+3*3+3*1, biases 3+3+3+1, gates 3+3+3 per channel
    total += 2 * c_lat * (24 + 10 + 9)
    return total


# -- weight serialization -------------------------------------------------


def _write_weights(model: CodecModel, fp: BinaryIO) -> None:
    entries: list[tuple[str, np.ndarray]] = [
        ("config.channels", np.asarray(model.cfg.channels, dtype=np.float64)),
        ("config.lrelu_slope", np.asarray([model.cfg.lrelu_slope], dtype=np.float64)),
        ("config.image_channels", np.asarray([model.cfg.image_channels], dtype=np.float64)),
    ]
    entries.extend((p.name, p.data) for p in model.parameters())

    fp.write(WEIGHTS_MAGIC)
    fp.write(struct.pack("<B", WEIGHTS_VERSION))
    fp.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        raw = name.encode("utf-8")
        fp.write(struct.pack("<H", len(raw)))
        fp.write(raw)
        fp.write(struct.pack("<BB", _CODE_FOR_DTYPE[arr.dtype], arr.ndim))
        for dim in arr.shape:
            fp.write(struct.pack("<I", dim))
        fp.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def save_weights(model: CodecModel, path: str) -> None:
    with open(path, "wb") as fp:
        _write_weights(model, fp)


def _read_exact(data: bytes, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(data):
        raise FormatError(f"truncated weight file: wanted {n} bytes", offset=pos)
    return data[pos : pos + n], pos + n


def parse_weight_entries(data: bytes) -> dict[str, np.ndarray]:
    """Parse the named-array container; raises FormatError with offsets."""
    pos = 0
    magic, pos = _read_exact(data, pos, 4)
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    ver, pos = _read_exact(data, pos, 1)
    if ver[0] != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weight file version {ver[0]}", offset=4)
    raw, pos = _read_exact(data, pos, 4)
    count = struct.unpack("<I", raw)[0]
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, pos = _read_exact(data, pos, 2)
        name_len = struct.unpack("<H", raw)[0]
        raw, pos = _read_exact(data, pos, name_len)
        name = raw.decode("utf-8")
        raw, pos = _read_exact(data, pos, 2)
        code, rank = raw[0], raw[1]
        if code not in _DTYPE_CODES:
            raise FormatError(f"unknown dtype code {code} for entry {name!r}", offset=pos - 2)
        dtype = np.dtype(_DTYPE_CODES[code])
        dims = []
        for _ in range(rank):
            raw, pos = _read_exact(data, pos, 4)
            dims.append(struct.unpack("<I", raw)[0])
        n_values = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw, pos = _read_exact(data, pos, n_values * dtype.itemsize)
        arr = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(dims)
        entries[name] = arr
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes", offset=pos)
    return entries


def load_weights(path: str) -> CodecModel:
    """Rebuild a model from :func:`save_weights` output, bit-exactly."""
    with open(path, "rb") as fp:
        data = fp.read()
    entries = parse_weight_entries(data)
    for key in ("config.channels", "config.lrelu_slope", "config.image_channels"):
        if key not in entries:
            raise FormatError(f"missing entry {key!r}")
    channels = tuple(int(v) for v in entries["config.channels"])
    cfg = CodecConfig(
        channels=channels,
        lrelu_slope=float(entries["config.lrelu_slope"][0]),
        image_channels=int(entries["config.image_channels"][0]),
    )
    param_dtypes = {arr.dtype for name, arr in entries.items() if not name.startswith("config.")}
    if len(param_dtypes) != 1:
        raise FormatError(f"inconsistent parameter dtypes: {sorted(map(str, param_dtypes))}")
    dtype = param_dtypes.pop()
    model = CodecModel(cfg, seed=0, dtype=dtype)
    named = model.named_parameters()
    missing = set(named) - set(entries)
    if missing:
        raise FormatError(f"weight file missing parameters: {sorted(missing)[:3]}...")
    for name, p in named.items():
        arr = entries[name]
        if arr.shape != p.data.shape:
            raise FormatError(f"shape mismatch for {name}: file {arr.shape} vs model {p.data.shape}")
        p.tensor.data = arr.astype(dtype, copy=True)
    return model
