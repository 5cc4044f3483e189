"""Command-line interface.

Subcommands: init-model, encode, decode, extract-roi, inspect-latents,
spectrum, metrics, rd-sweep, bd-rate, train, serve.  Metrics and rate
reports are emitted as ``key=value`` lines; images are PPM (always) or PNG
(with Pillow).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bitstream as BS
from . import codec
from . import imageio
from . import metrics
from . import training
from .model import CodecConfig, init_model, load_weights, parameter_count, preset, save_weights


def _parse_channels(text: str) -> CodecConfig:
    if text in ("tiny", "toy", "large"):
        return preset(text)
    return CodecConfig(channels=tuple(int(v) for v in text.split(",")))


def _parse_roi(values: list[str]) -> list[tuple[int, int, int, int]]:
    rois = []
    for v in values:
        parts = v.split(",")
        if len(parts) != 4:
            raise SystemExit(f"--roi expects x,y,w,h, got {v!r}")
        rois.append(tuple(int(p) for p in parts))
    return rois


def _load_model(path: str):
    return load_weights(path)


def _emit(report: dict, out=None) -> None:
    lines = [f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in report.items()]
    text = "\n".join(lines)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def cmd_init_model(args) -> int:
    cfg = _parse_channels(args.config)
    model = init_model(cfg, seed=args.seed)
    save_weights(model, args.out)
    _emit({
        "channels": ",".join(map(str, cfg.channels)),
        "parameters": parameter_count(cfg),
        "model_id": model.model_id().hex(),
        "out": args.out,
    })
    return 0


def cmd_encode(args) -> int:
    model = _load_model(args.model)
    img = imageio.read_image(args.input)
    container, stats = codec.encode_image(img, model)
    Path(args.out).write_bytes(BS.serialize(container))
    _emit(stats, args.report)
    return 0


def cmd_decode(args) -> int:
    model = _load_model(args.model)
    container = BS.parse(Path(args.input).read_bytes())
    rois = None
    if args.mode == "roi" and args.roi:
        rois = codec.RoiSet(tuple(_parse_roi(args.roi)),
                            container.header.width, container.header.height)
    img = codec.decode_image(container, model, args.mode, rois)
    imageio.write_image(args.out, img)
    report = {"mode": args.mode, "out": args.out}
    if args.reference:
        ref = imageio.read_image(args.reference)
        report["psnr"] = metrics.psnr(ref, imageio.to_float(img))
        report["mse"] = metrics.mse(ref, imageio.to_float(img))
    _emit(report)
    return 0


def cmd_extract_roi(args) -> int:
    model = _load_model(args.model)
    container = BS.parse(Path(args.input).read_bytes())
    tiled = BS.extract_roi(container, _parse_roi(args.roi), model)
    Path(args.out).write_bytes(BS.serialize(tiled))
    tile_bytes = sum(len(BS.pack_chunk(t.chunk)) for t in tiled.enhancement)
    _emit({
        "tiles": len(tiled.enhancement),
        "tile_bytes": tile_bytes,
        "full_enh_bytes": len(BS.pack_chunk(container.enhancement)),
        "out": args.out,
    })
    return 0


def cmd_inspect_latents(args) -> int:
    model = _load_model(args.model)
    container = BS.parse(Path(args.input).read_bytes())
    y_low, y_high = codec.decode_latents(container, model, "full")
    ext = ".png" if imageio.png_available() else ".ppm"
    for name, latent in (("low", y_low), ("high", y_high)):
        grid = codec.tile_channels(latent)
        if grid.size == 0:
            print(f"{name}: all channels zero, skipped")
            continue
        path = f"{args.out_prefix}_{name}{ext}"
        imageio.write_gray(path, grid)
        print(f"{name}={path}")
    return 0


def cmd_spectrum(args) -> int:
    img = imageio.read_image(args.input)
    spec = codec.spectrum(img)
    imageio.write_gray(args.out, spec)
    print(f"out={args.out}")
    return 0


def cmd_metrics(args) -> int:
    a = imageio.read_image(args.image_a)
    b = imageio.read_image(args.image_b)
    report = {"mse": metrics.mse(a, b), "psnr": metrics.psnr(a, b)}
    if args.msssim:
        report["ms_ssim"] = metrics.ms_ssim(a, b)
    _emit(report, args.report)
    return 0


def cmd_bd_rate(args) -> int:
    def read_curve(path):
        points = []
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            rate, quality = (float(v) for v in line.replace(",", " ").split())
            points.append((rate, quality))
        return points

    value = metrics.bd_rate(read_curve(args.curve_a), read_curve(args.curve_b))
    print(f"bd_rate_percent={value:.4f}")
    return 0


def cmd_rd_sweep(args) -> int:
    images = training.synthetic_dataset(args.images, args.size, seed=args.seed)
    val = training.synthetic_dataset(max(2, args.images // 4), args.size, seed=args.seed + 1)
    settings = training.TrainSettings(
        channels=_parse_channels(args.config).channels,
        steps=args.steps, crop_size=args.size, seed=args.seed, lr=args.lr)
    lambdas = tuple(float(v) for v in args.lambdas.split(","))
    alphas = tuple(float(v) for v in args.alphas.split(","))
    rows = training.alpha_sweep(images, val, settings, lambdas=lambdas, alphas=alphas,
                                log=lambda row: print(
                                    f"lambda={row['lambda']:.6g} alpha={row['alpha']:.6g} "
                                    f"bpp_base={row['bpp_base']:.4f} bpp_enh={row['bpp_enh']:.4f} "
                                    f"psnr_full={row['psnr_full']:.2f} psnr_base={row['psnr_base']:.2f}"))
    table = training.sweep_table(rows)
    Path(args.out).write_text(table)
    print(f"out={args.out}")
    return 0


def cmd_train(args) -> int:
    if args.config:
        settings = training.parse_config(Path(args.config).read_text())
    else:
        settings = training.TrainSettings()
    if args.steps is not None:
        settings = replace(settings, steps=args.steps)
    if args.seed is not None:
        settings = replace(settings, seed=args.seed)
    if args.data == "synthetic":
        images = training.synthetic_dataset(16, settings.crop_size, seed=settings.seed)
        val = training.synthetic_dataset(4, settings.crop_size, seed=settings.seed + 1)
    else:
        images = training.load_dataset(args.data)
        val = None

    trace_fp = open(args.trace, "w") if args.trace else None
    if trace_fp:
        trace_fp.write("step,rate_l,rate_h,dist_full,dist_base,total,lr\n")

    def log(row):
        line = (f"{row['step']},{row['rate_l']:.6g},{row['rate_h']:.6g},"
                f"{row['dist_full']:.6g},{row['dist_base']:.6g},{row['total']:.6g},{row['lr']:.6g}")
        if trace_fp:
            trace_fp.write(line + "\n")
        if row["step"] % 50 == 0 or row["step"] == 1:
            print(line)

    try:
        model, trace = training.train(images, settings, val_images=val,
                                      checkpoint_path=args.out, log=log)
    finally:
        if trace_fp:
            trace_fp.close()
    print(f"out={args.out}")
    print(f"final_loss={trace[-1]['total']:.6g}")
    return 0


def cmd_serve(args) -> int:
    from .service import create_server

    if args.model:
        model = _load_model(args.model)
    else:
        model = init_model(_parse_channels(args.config), seed=args.seed)
    server = create_server(model, host=args.host, port=args.port,
                           static_dir=args.static,
                           retain_originals=not args.no_originals)
    host, port = server.server_address
    print(f"serving on http://{host}:{port} (model {model.model_id().hex()})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqcodec",
                                     description="Quality-scalable frequency-aware image codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-model", help="create random weights for a config preset")
    p.add_argument("--config", default="toy", help="tiny|toy|large or comma channel list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_model)

    p = sub.add_parser("encode", help="encode an image into a two-layer stream")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--report", help="also write the key=value stats to this file")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct an image from a stream")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--mode", choices=("full", "base", "roi"), default="full")
    p.add_argument("--roi", action="append", default=[], help="x,y,w,h (repeatable)")
    p.add_argument("--reference", help="original image for PSNR reporting")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("extract-roi", help="re-tile the enhancement layer to selected ROIs")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--roi", action="append", required=True, help="x,y,w,h (repeatable)")
    p.set_defaults(func=cmd_extract_roi)

    p = sub.add_parser("inspect-latents", help="write tiled latent-channel images")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--out-prefix", required=True)
    p.set_defaults(func=cmd_inspect_latents)

    p = sub.add_parser("spectrum", help="write the log-magnitude Fourier view")
    p.add_argument("input")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("metrics", help="compare two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--msssim", action="store_true", help="also compute MS-SSIM (needs >=176px)")
    p.add_argument("--report", help="also write results to this file")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bd-rate", help="BD-rate between two rate-quality curves")
    p.add_argument("--curve-a", required=True, help="file of 'rate quality' lines (anchor)")
    p.add_argument("--curve-b", required=True, help="file of 'rate quality' lines (candidate)")
    p.set_defaults(func=cmd_bd_rate)

    p = sub.add_parser("rd-sweep", help="train toy models over a (lambda, alpha) grid")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--config", default="tiny")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--images", type=int, default=12)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambdas", default="0.08,0.01")
    p.add_argument("--alphas", default="0.1,0")
    p.set_defaults(func=cmd_rd_sweep)

    p = sub.add_parser("train", help="toy training loop")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--data", default="synthetic", help="image directory or 'synthetic'")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="weight checkpoint path")
    p.add_argument("--trace", help="CSV loss trace path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("serve", help="run the ROI-enhancement HTTP service")
    p.add_argument("--model", default=os.environ.get("FREQCODEC_MODEL"),
                   help="weight file; omitted -> random init from --config/--seed")
    p.add_argument("--config", default="tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--host", default=os.environ.get("FREQCODEC_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("FREQCODEC_PORT", "8080")))
    p.add_argument("--static", default=os.environ.get("FREQCODEC_STATIC"),
                   help="directory of viewer files to serve at /")
    p.add_argument("--no-originals", action="store_true",
                   help="do not retain uploads (disables PSNR stats)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
