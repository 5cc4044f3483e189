"""Image file I/O: binary PPM (P6, maxval 255) always; PNG when Pillow is
installed.  In-memory images are float arrays [3,H,W] in [0,1]; export
clamps and quantizes to 8 bits.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import FormatError

try:
    from PIL import Image as _PILImage
except ImportError:  # pragma: no cover - Pillow is optional
    _PILImage = None


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0,1] and quantize: the export boundary."""
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def to_float(img_u8: np.ndarray) -> np.ndarray:
    return img_u8.astype(np.float32) / 255.0


def _skip_ppm_whitespace(data: bytes, pos: int) -> int:
    while pos < len(data):
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    return pos


def _read_ppm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    pos = _skip_ppm_whitespace(data, pos)
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PPM header", offset=pos)
    return data[start:pos], pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse binary PPM bytes into a uint8 [3,H,W] array."""
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM (magic {data[:2]!r})", offset=0)
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_ppm_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise FormatError(f"bad PPM header token {token!r}", offset=pos) from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PPM dimensions {width}x{height}", offset=pos)
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}", offset=pos)
    pos += 1  # the single whitespace byte after maxval
    need = width * height * 3
    if len(data) - pos < need:
        raise FormatError(f"PPM pixel data truncated: need {need} bytes", offset=pos)
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return pixels.reshape(height, width, 3).transpose(2, 0, 1).copy()


def encode_ppm(img_u8: np.ndarray) -> bytes:
    if img_u8.ndim != 3 or img_u8.shape[0] != 3:
        raise ValueError(f"expected [3,H,W] uint8 image, got shape {img_u8.shape}")
    _, h, w = img_u8.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + img_u8.transpose(1, 2, 0).tobytes()


def decode_image_bytes(data: bytes) -> np.ndarray:
    """uint8 [3,H,W] from PPM or (with Pillow) any supported format."""
    if data[:2] == b"P6":
        return decode_ppm(data)
    if _PILImage is None:
        raise FormatError("not a PPM and Pillow is not installed for other formats")
    try:
        with _PILImage.open(io.BytesIO(data)) as im:
            rgb = np.asarray(im.convert("RGB"))
    except Exception as e:
        raise FormatError(f"undecodable image: {e}") from None
    return rgb.transpose(2, 0, 1).copy()


def encode_png(img_u8: np.ndarray) -> bytes:
    if _PILImage is None:
        raise RuntimeError("PNG support requires Pillow")
    im = _PILImage.fromarray(img_u8.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def png_available() -> bool:
    return _PILImage is not None


def read_image(path: str | Path) -> np.ndarray:
    """Read an image file as float [3,H,W] in [0,1]."""
    data = Path(path).read_bytes()
    return to_float(decode_image_bytes(data))


def write_image(path: str | Path, img: np.ndarray) -> None:
    """Write float [3,H,W] (or uint8) to .ppm or, with Pillow, .png."""
    path = Path(path)
    u8 = img if img.dtype == np.uint8 else to_uint8(img)
    if path.suffix.lower() == ".ppm":
        path.write_bytes(encode_ppm(u8))
    elif path.suffix.lower() == ".png":
        path.write_bytes(encode_png(u8))
    else:
        raise ValueError(f"unsupported image extension {path.suffix!r} (use .ppm or .png)")


def write_gray(path: str | Path, img: np.ndarray) -> None:
    """Write a single-channel float [H,W] image by replicating to RGB."""
    write_image(path, np.repeat(img[None], 3, axis=0))
