"""Quality-scalable frequency-aware learned image codec.

The encoder splits an image into low/high spatial-frequency latent
branches via wavelet-linked octave convolutions, entropy-codes them into
separate base and enhancement bitstreams, and the decoder reconstructs at
full quality, base-only quality, or with selected ROIs enhanced.
"""

from .bitstream import CodedChunk, Container, Header, RoiTile, extract_roi, parse, serialize
from .codec import RoiSet, decode_image, encode_image, spectrum, visualize_latents
from .entropy import CdfTable, FactorizedDensity, ans_decode, ans_encode, build_cdf_tables, estimate_bits, quantize
from .errors import FormatError
from .metrics import bd_rate, ms_ssim, mse, psnr
from .model import CodecConfig, CodecModel, LatentPair, init_model, load_weights, preset, save_weights
from .optim import Adam, Parameter, adam_step
from .tensor import Tensor, no_grad
from .training import LossConfig, PlateauSchedule, TrainSettings, alpha_sweep, loss_fn, train
from .wavelet import HAAR_KERNELS, haar_analysis4, haar_filter, haar_synthesis4

__version__ = "0.1.0"

__all__ = [
    "Adam", "CdfTable", "CodecConfig", "CodecModel", "CodedChunk", "Container",
    "FactorizedDensity", "FormatError", "HAAR_KERNELS", "Header", "LatentPair",
    "LossConfig", "Parameter", "PlateauSchedule", "RoiSet", "RoiTile", "Tensor",
    "TrainSettings", "adam_step", "alpha_sweep", "ans_decode", "ans_encode",
    "bd_rate", "build_cdf_tables", "decode_image", "encode_image", "estimate_bits",
    "extract_roi", "haar_analysis4", "haar_filter", "haar_synthesis4", "init_model",
    "load_weights", "loss_fn", "ms_ssim", "mse", "no_grad", "parse", "preset",
    "psnr", "quantize", "save_weights", "serialize", "spectrum", "train",
    "visualize_latents",
]
