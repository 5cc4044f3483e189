"""CLI surface: every subcommand runs end to end on tiny inputs."""

import pytest

from freqcodec import cli, imageio
from freqcodec import training as TR
from freqcodec.model import load_weights


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    model_path = str(root / "model.flcw")
    assert cli.main(["init-model", "--config", "tiny", "--seed", "5", "--out", model_path]) == 0
    img = TR.synthetic_dataset(1, 64, seed=6)[0]
    img_path = str(root / "input.ppm")
    imageio.write_image(img_path, img)
    return root, model_path, img_path


class TestRoundTripCommands:
    def test_encode_decode(self, workspace, capsys):
        root, model_path, img_path = workspace
        stream = str(root / "out.fqc")
        assert cli.main(["encode", img_path, "--model", model_path, "-o", stream,
                         "--report", str(root / "report.txt")]) == 0
        report = (root / "report.txt").read_text()
        assert "bpp_total=" in report

        out = str(root / "full.ppm")
        assert cli.main(["decode", stream, "--model", model_path, "-o", out,
                         "--reference", img_path]) == 0
        captured = capsys.readouterr().out
        assert "psnr=" in captured
        decoded = imageio.read_image(out)
        assert decoded.shape == (3, 64, 64)

    def test_decode_base_and_roi(self, workspace):
        root, model_path, img_path = workspace
        stream = str(root / "out.fqc")
        base_out = str(root / "base.ppm")
        assert cli.main(["decode", stream, "--model", model_path, "-o", base_out,
                         "--mode", "base"]) == 0
        roi_out = str(root / "roi.ppm")
        assert cli.main(["decode", stream, "--model", model_path, "-o", roi_out,
                         "--mode", "roi", "--roi", "0,0,32,32"]) == 0
        base = imageio.read_image(base_out)
        roi = imageio.read_image(roi_out)
        assert base.shape == roi.shape

    def test_extract_roi_then_decode(self, workspace):
        root, model_path, img_path = workspace
        stream = str(root / "out.fqc")
        tiled = str(root / "tiled.fqc")
        assert cli.main(["extract-roi", stream, "--model", model_path, "-o", tiled,
                         "--roi", "0,0,16,16", "--roi", "32,32,16,16"]) == 0
        out = str(root / "tiled.ppm")
        assert cli.main(["decode", tiled, "--model", model_path, "-o", out,
                         "--mode", "roi"]) == 0

    def test_inspect_latents(self, workspace, capsys):
        root, model_path, img_path = workspace
        stream = str(root / "out.fqc")
        prefix = str(root / "latents")
        assert cli.main(["inspect-latents", stream, "--model", model_path,
                         "-o", prefix]) == 0
        out = capsys.readouterr().out
        assert "low=" in out and "high=" in out

    def test_spectrum(self, workspace):
        root, model_path, img_path = workspace
        out = str(root / "spec.ppm")
        assert cli.main(["spectrum", img_path, "-o", out]) == 0
        spec = imageio.read_image(out)
        assert spec.shape[1] == 64  # padded to pow2 (already 64)


class TestMetricsCommands:
    def test_metrics(self, workspace, capsys):
        root, model_path, img_path = workspace
        assert cli.main(["metrics", img_path, img_path]) == 0
        out = capsys.readouterr().out
        assert "mse=0" in out and "psnr=100" in out

    def test_bd_rate(self, workspace, capsys, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("0.25 30\n0.5 33\n1.0 36\n2.0 39\n")
        b.write_text("0.225 30\n0.45 33\n0.9 36\n1.8 39\n")
        assert cli.main(["bd-rate", "--curve-a", str(a), "--curve-b", str(b)]) == 0
        out = capsys.readouterr().out
        assert "bd_rate_percent=-10" in out


class TestTrainCommand:
    def test_train_writes_checkpoint_and_trace(self, tmp_path, capsys):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("channels = 4,6\nsteps = 6\nsteps_per_epoch = 3\n"
                       "crop_size = 32\nbatch_size = 2\nseed = 3\nlr = 0.001\n")
        out = str(tmp_path / "trained.flcw")
        trace = str(tmp_path / "trace.csv")
        assert cli.main(["train", "--config", str(cfg), "--out", out, "--trace", trace]) == 0
        model = load_weights(out)
        assert model.cfg.channels == (4, 6)
        lines = (tmp_path / "trace.csv").read_text().strip().splitlines()
        assert lines[0].startswith("step,rate_l")
        assert len(lines) == 7
