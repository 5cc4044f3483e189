"""Rate-distortion training: the two-reconstruction loss, the plateau LR
schedule, a deterministic toy training loop, and the sweep harness over the
(lambda, alpha) grid.

The loss is  rate + lambda * (D(x, x_full) + alpha * D(x, x_base))  with the
rate term in bits per pixel and D either MSE on the 0..255 scale or
1 - MS-SSIM.  Both reconstructions share one analysis pass and one noisy
latent draw; the base reconstruction just zeroes the high branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import codec
from . import metrics
from . import tensor as T
from .entropy import estimate_bits, quantize
from .model import CodecConfig, CodecModel, LatentPair, init_model, preset, save_weights
from .optim import Adam
from .tensor import Tensor

MSE_SCALE = 255.0 * 255.0  # keeps the 2^n * 1e-2 lambda grid in a useful range

LAMBDA_GRID = tuple(2.0**n * 1e-2 for n in range(3, -4, -1))
ALPHA_GRID = (0.1, 0.01, 0.001, 0.0001, 0.0)


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.01
    alpha: float = 0.0
    metric: str = "mse"  # "mse" or "msssim"

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.metric not in ("mse", "msssim"):
            raise ValueError(f"unknown distortion metric {self.metric!r}")


def _distortion(x: Tensor, recon: Tensor, metric: str) -> Tensor:
    if metric == "mse":
        d = x - recon
        return T.mean_all(d * d) * MSE_SCALE
    return 1.0 - metrics.ms_ssim_tensor(recon, x)


def loss_fn(x: Tensor, model: CodecModel, cfg: LossConfig,
            rng: np.random.Generator, mode: str = "noise") -> tuple[Tensor, dict]:
    """Training objective plus its parts.

    ``x`` is [3,H,W] or [N,3,H,W] in [0,1].  Rate is estimated from one
    quantized latent draw (uniform noise in training mode, rounding for
    validation); the total is assembled as
    (rate + lam*dist_full) + (lam*alpha)*dist_base so the decomposition
    identity  loss(alpha) == loss(0) + lam*alpha*dist_base  holds exactly.
    """
    h, w = x.shape[-2], x.shape[-1]
    n_images = x.shape[0] if x.ndim == 4 else 1
    n_pixels = n_images * h * w

    y = model.analyze(x)
    q_low = quantize(y.low, mode, rng)
    q_high = quantize(y.high, mode, rng)

    rate_l = estimate_bits(q_low, model.density_l) * (1.0 / n_pixels)
    rate_h = estimate_bits(q_high, model.density_h) * (1.0 / n_pixels)

    recon = model.synthesize(LatentPair(q_low, q_high), out_hw=(h, w))
    dist_full = _distortion(x, recon, cfg.metric)

    zeros = Tensor(np.zeros(q_high.shape, dtype=q_high.dtype))
    if cfg.alpha > 0:
        recon_base = model.synthesize(LatentPair(q_low, zeros), out_hw=(h, w))
        dist_base = _distortion(x, recon_base, cfg.metric)
    else:
        with T.no_grad():
            recon_base = model.synthesize(LatentPair(q_low.detach(), zeros), out_hw=(h, w))
            dist_base = _distortion(x.detach(), recon_base, cfg.metric)

    total = (rate_l + rate_h + cfg.lam * dist_full) + (cfg.lam * cfg.alpha) * dist_base
    parts = {
        "rate_l": rate_l.item(),
        "rate_h": rate_h.item(),
        "dist_full": dist_full.item(),
        "dist_base": dist_base.item(),
        "total": total.item(),
    }
    return total, parts


class PlateauSchedule:
    """Initial LR held for the warmup epochs, then cut by 90% whenever the
    validation loss has not improved (relative threshold) for ``patience``
    consecutive epochs."""

    def __init__(self, lr: float = 1e-4, warmup_epochs: int = 30, patience: int = 4,
                 drop: float = 0.1, threshold: float = 1e-4):
        self.lr = lr
        self.warmup_epochs = warmup_epochs
        self.patience = patience
        self.drop = drop
        self.threshold = threshold
        self.best = math.inf
        self.stale = 0

    def update(self, epoch: int, val_loss: float) -> float:
        """Record one epoch's validation loss; returns the LR for the next epoch."""
        if val_loss < self.best * (1.0 - self.threshold):
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
        if epoch > self.warmup_epochs and self.stale >= self.patience:
            self.lr *= self.drop
            self.stale = 0
        return self.lr


@dataclass
class TrainSettings:
    channels: tuple[int, ...] = (8, 16)
    lam: float = 0.01
    alpha: float = 0.0
    metric: str = "mse"
    lr: float = 1e-4
    batch_size: int = 8
    crop_size: int = 64
    steps: int = 500
    steps_per_epoch: int = 50
    seed: int = 0
    warmup_epochs: int = 30
    patience: int = 4

    def loss_config(self) -> LossConfig:
        return LossConfig(self.lam, self.alpha, self.metric)

    def model_config(self) -> CodecConfig:
        return CodecConfig(channels=self.channels)


_SETTING_TYPES = {
    "lam": float, "lambda": float, "alpha": float, "lr": float,
    "batch_size": int, "crop_size": int, "steps": int, "steps_per_epoch": int,
    "seed": int, "warmup_epochs": int, "patience": int, "metric": str,
}


def parse_config(text: str) -> TrainSettings:
    """Parse ``key = value`` lines (# comments allowed) into settings."""
    settings = TrainSettings()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "channels":
            if value in ("tiny", "toy", "large"):
                settings = replace(settings, channels=preset(value).channels)
            else:
                settings = replace(settings, channels=tuple(int(v) for v in value.split(",")))
        elif key in _SETTING_TYPES:
            field_name = "lam" if key == "lambda" else key
            settings = replace(settings, **{field_name: _SETTING_TYPES[key](value)})
        else:
            raise ValueError(f"line {lineno}: unknown setting {key!r}")
    return settings


# -- data -------------------------------------------------------------------


def synthetic_dataset(n: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    """Images of random linear gradients with hard-edged rectangles, [0,1]."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32) / size
    images = []
    for _ in range(n):
        gx, gy = rng.uniform(-0.6, 0.6, size=(2, 3)).astype(np.float32)
        base = rng.uniform(0.2, 0.8, size=3).astype(np.float32)
        img = base[:, None, None] + gx[:, None, None] * xs + gy[:, None, None] * ys
        for _ in range(rng.integers(2, 6)):
            y0, x0 = rng.integers(0, size - 8, size=2)
            h, w = rng.integers(4, size // 2, size=2)
            color = rng.uniform(0, 1, size=3).astype(np.float32)
            img[:, y0 : y0 + h, x0 : x0 + w] = color[:, None, None]
        images.append(np.clip(img, 0.0, 1.0))
    return images


def load_dataset(directory: str | Path) -> list[np.ndarray]:
    from . import imageio

    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in (".ppm", ".png"))
    if not paths:
        raise ValueError(f"no .ppm/.png images found in {directory}")
    return [imageio.read_image(p) for p in paths]


def _sample_batch(images: list[np.ndarray], batch: int, crop: int,
                  rng: np.random.Generator) -> np.ndarray:
    out = np.empty((batch, 3, crop, crop), dtype=np.float32)
    for i in range(batch):
        img = images[int(rng.integers(0, len(images)))]
        _, h, w = img.shape
        if h < crop or w < crop:
            raise ValueError(f"image {h}x{w} smaller than crop size {crop}")
        y0 = int(rng.integers(0, h - crop + 1))
        x0 = int(rng.integers(0, w - crop + 1))
        out[i] = img[:, y0 : y0 + crop, x0 : x0 + crop]
    return out


# -- training loop ------------------------------------------------------------


def train(images: list[np.ndarray], settings: TrainSettings,
          val_images: list[np.ndarray] | None = None,
          checkpoint_path: str | None = None,
          log=None) -> tuple[CodecModel, list[dict]]:
    """Deterministic toy training; returns the model and the per-step trace.

    Each trace row carries (step, rate_l, rate_h, dist_full, dist_base,
    total, lr); validation runs once per epoch with rounded quantization and
    drives the plateau schedule.
    """
    if not images:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(settings.seed)
    model = init_model(settings.model_config(), seed=settings.seed)
    cfg = settings.loss_config()
    opt = Adam(model.parameters(), lr=settings.lr)
    schedule = PlateauSchedule(settings.lr, settings.warmup_epochs, settings.patience)
    if val_images is None:
        val_images = images[-1:]
    trace: list[dict] = []

    epoch = 0
    for step in range(1, settings.steps + 1):
        batch = _sample_batch(images, settings.batch_size, settings.crop_size, rng)
        total, parts = loss_fn(Tensor(batch), model, cfg, rng)
        total.backward()
        opt.step()
        row = {"step": step, **parts, "lr": opt.lr}
        trace.append(row)
        if log is not None:
            log(row)
        if step % settings.steps_per_epoch == 0:
            epoch += 1
            val = validate(model, val_images, cfg, settings.crop_size)
            opt.lr = schedule.update(epoch, val)
            if checkpoint_path is not None:
                save_weights(model, checkpoint_path)
    if checkpoint_path is not None:
        save_weights(model, checkpoint_path)
    return model, trace


def validate(model: CodecModel, images: list[np.ndarray], cfg: LossConfig,
             crop_size: int | None = None) -> float:
    """Mean deterministic loss (rounded latents) over center crops."""
    losses = []
    rng = np.random.default_rng(0)  # unused in round mode
    with T.no_grad():
        for img in images:
            x = img
            if crop_size is not None and (img.shape[1] > crop_size or img.shape[2] > crop_size):
                y0 = (img.shape[1] - crop_size) // 2
                x0 = (img.shape[2] - crop_size) // 2
                x = img[:, y0 : y0 + crop_size, x0 : x0 + crop_size]
            total, _ = loss_fn(Tensor(x), model, cfg, rng, mode="round")
            losses.append(total.item())
    return float(np.mean(losses))


def evaluate(model: CodecModel, images: list[np.ndarray]) -> dict:
    """Coded-rate and quality summary over a held-out set (full vs base)."""
    rows = []
    for img in images:
        container, stats = codec.encode_image(img, model)
        full = codec.decode_image(container, model, "full")
        base = codec.decode_image(container, model, "base")
        img_u8 = (np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8)
        rows.append({
            "bpp_base": stats["bpp_base"],
            "bpp_enh": stats["bpp_enh"],
            "psnr_full": metrics.psnr(img_u8 / 255.0, full / 255.0),
            "psnr_base": metrics.psnr(img_u8 / 255.0, base / 255.0),
            "mse_full": metrics.mse(img_u8 / 255.0, full / 255.0),
            "mse_base": metrics.mse(img_u8 / 255.0, base / 255.0),
        })
    out = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    out["base_fraction"] = out["bpp_base"] / max(out["bpp_base"] + out["bpp_enh"], 1e-12)
    return out


def alpha_sweep(images: list[np.ndarray], val_images: list[np.ndarray],
                settings: TrainSettings,
                lambdas=(0.08, 0.01), alphas=(0.1, 0.0),
                log=None) -> list[dict]:
    """Train one toy model per (lambda, alpha) cell and evaluate both modes."""
    rows = []
    for lam in lambdas:
        for alpha in alphas:
            cell = replace(settings, lam=lam, alpha=alpha)
            model, _ = train(images, cell, val_images=val_images)
            summary = evaluate(model, val_images)
            row = {"lambda": lam, "alpha": alpha, **summary}
            rows.append(row)
            if log is not None:
                log(row)
    return rows


def sweep_table(rows: list[dict]) -> str:
    """Plot-ready CSV (header + one line per sweep cell)."""
    cols = ["lambda", "alpha", "bpp_base", "bpp_enh", "base_fraction",
            "psnr_full", "psnr_base"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(f"{row[c]:.6g}" for c in cols))
    return "\n".join(lines) + "\n"
