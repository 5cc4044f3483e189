"""End-to-end encode/decode, reconstruction modes, inspection tools."""

import numpy as np
import pytest

from freqcodec import bitstream as BS
from freqcodec import codec as C
from freqcodec import imageio
from freqcodec import model as M
from freqcodec import tensor as T
from freqcodec.model import LatentPair
from freqcodec.tensor import Tensor

TINY = M.preset("tiny")


@pytest.fixture(scope="module")
def setup():
    model = M.init_model(TINY, seed=51)
    rng = np.random.default_rng(52)
    img = rng.uniform(0, 1, size=(3, 64, 64)).astype(np.float32)
    container, stats = C.encode_image(img, model)
    return model, img, container, stats


class TestEncodeDecode:
    def test_decode_matches_direct_pipeline(self, setup):
        model, img, container, _ = setup
        with T.no_grad():
            y = model.analyze(Tensor(img))
        y_low = T.round_half_away(y.low.data).astype(np.int64)
        y_high = T.round_half_away(y.high.data).astype(np.int64)
        direct = C.synthesize_from_latents(y_low, y_high, model, (64, 64))
        via_stream = C.decode_image(container, model, "full")
        np.testing.assert_array_equal(via_stream, direct)

    def test_bpp_accounting(self, setup):
        model, img, container, stats = setup
        n = 64 * 64
        assert stats["bpp_total"] == pytest.approx(
            (len(container.base.payload) + len(container.enhancement.payload)) * 8 / n)
        assert stats["bpp_container"] > stats["bpp_total"]
        assert stats["bpp_base"] > 0 and stats["bpp_enh"] > 0

    def test_base_mode_equals_zeroed_high(self, setup):
        model, img, container, _ = setup
        base_img = C.decode_image(container, model, "base")
        y_low, _ = C.decode_latents(container, model, "full")
        zeroed = C.synthesize_from_latents(y_low, np.zeros_like(y_low), model, (64, 64))
        np.testing.assert_array_equal(base_img, zeroed)

    def test_full_cover_roi_equals_full(self, setup):
        model, img, container, _ = setup
        rois = C.RoiSet(((0, 0, 64, 64),), 64, 64)
        roi_img = C.decode_image(container, model, "roi", rois)
        full_img = C.decode_image(container, model, "full")
        np.testing.assert_array_equal(roi_img, full_img)

    def test_roi_mode_on_tiled_container(self, setup):
        model, img, container, _ = setup
        tiled = BS.extract_roi(container, [(0, 0, 32, 32)], model)
        roi_img = C.decode_image(tiled, model, "roi")
        direct = C.decode_image(container, model, "roi", C.RoiSet(((0, 0, 32, 32),), 64, 64))
        np.testing.assert_array_equal(roi_img, direct)

    def test_full_mode_requires_untiled(self, setup):
        model, img, container, _ = setup
        tiled = BS.extract_roi(container, [(0, 0, 32, 32)], model)
        with pytest.raises(ValueError):
            C.decode_image(tiled, model, "full")

    def test_roi_needs_enhancement(self, setup):
        model, img, container, _ = setup
        base_only = BS.Container(container.header, container.base, None)
        with pytest.raises(ValueError):
            C.decode_image(base_only, model, "roi", C.RoiSet(((0, 0, 8, 8),), 64, 64))
        with pytest.raises(ValueError):
            C.decode_image(base_only, model, "full")

    def test_model_mismatch_raises(self, setup):
        model, img, container, _ = setup
        other = M.init_model(TINY, seed=777)
        with pytest.raises(ValueError, match=other.model_id().hex()):
            C.decode_image(container, other, "full")

    def test_decode_deterministic(self, setup):
        model, img, container, _ = setup
        a = C.decode_image(container, model, "full")
        b = C.decode_image(container, model, "full")
        np.testing.assert_array_equal(a, b)

    def test_serialized_round_trip_decodes_identically(self, setup):
        model, img, container, _ = setup
        back = BS.parse(BS.serialize(container))
        np.testing.assert_array_equal(
            C.decode_image(back, model, "full"), C.decode_image(container, model, "full"))

    def test_corrupt_payload_fails_cleanly(self, setup):
        from freqcodec.errors import FormatError

        model, img, container, _ = setup
        data = bytearray(BS.serialize(container))
        # Flip a byte inside the base chunk's coder state.
        base_payload_start = 30 + 2 + 4 * container.header.channels_low + 4
        data[base_payload_start] ^= 0xFF
        parsed = BS.parse(bytes(data))  # framing still parses
        with pytest.raises(FormatError):
            C.decode_image(parsed, model, "base")

    def test_too_small_image_rejected(self):
        model = M.init_model(TINY, seed=1)
        with pytest.raises(ValueError):
            C.encode_image(np.zeros((3, 2, 2), dtype=np.float32), model)

    def test_roiset_invariants(self):
        with pytest.raises(ValueError):
            C.RoiSet(((0, 0, 0, 8),), 64, 64)  # zero area
        with pytest.raises(ValueError):
            C.RoiSet(((-2, 0, 8, 8),), 64, 64)  # out of bounds
        with pytest.raises(ValueError):
            C.RoiSet((), 64, 64)  # empty

    def test_odd_dims_encode_decode(self):
        model = M.init_model(TINY, seed=53)
        rng = np.random.default_rng(54)
        img = rng.uniform(0, 1, size=(3, 37, 45)).astype(np.float32)
        container, stats = C.encode_image(img, model)
        out = C.decode_image(container, model, "full")
        assert out.shape == (3, 37, 45)


class TestRoiReceptiveField:
    def test_influence_bound_empirical(self):
        # Perturbing one latent cell must only change pixels inside the
        # conservative influence rectangle.
        model = M.init_model(TINY, seed=55, dtype=np.float64)
        rng = np.random.default_rng(56)
        lat = 16
        y_low = rng.integers(-3, 4, size=(16, lat, lat)).astype(np.float64)
        y_high = rng.integers(-3, 4, size=(16, lat, lat)).astype(np.float64)
        with T.no_grad():
            ref = model.synthesize(LatentPair(Tensor(y_low), Tensor(y_high))).data
            bumped = y_high.copy()
            bumped[:, 5, 7] += 3.0
            out = model.synthesize(LatentPair(Tensor(y_low), Tensor(bumped))).data
        changed = np.argwhere(np.abs(out - ref) > 0)
        assert changed.size > 0
        y0, x0, y1, x1 = C.synthesis_influence_bound((5, 7, 1, 1), model.cfg.stages)
        assert changed[:, 1].min() >= y0 and changed[:, 1].max() < y1
        assert changed[:, 2].min() >= x0 and changed[:, 2].max() < x1

    def test_pixels_outside_influence_match_base(self):
        model = M.init_model(TINY, seed=57)
        rng = np.random.default_rng(58)
        img = rng.uniform(0, 1, size=(3, 128, 128)).astype(np.float32)
        container, _ = C.encode_image(img, model)
        roi = (0, 0, 8, 8)  # maps to a couple of latent cells in the corner
        rois = C.RoiSet((roi,), 128, 128)
        roi_img = C.decode_image(container, model, "roi", rois)
        base_img = C.decode_image(container, model, "base")
        tile = BS.image_rect_to_latent(roi, model.cfg.downsampling,
                                       container.header.latent_h, container.header.latent_w)
        y0, x0, y1, x1 = C.synthesis_influence_bound(tile, model.cfg.stages)
        outside = np.ones((128, 128), dtype=bool)
        outside[max(0, y0) : y1, max(0, x0) : x1] = False
        assert outside.any()
        np.testing.assert_array_equal(roi_img[:, outside], base_img[:, outside])


class TestVisualize:
    def test_seven_channels_three_by_three(self):
        y = np.zeros((9, 4, 4))
        for c in range(7):
            y[c] = np.random.default_rng(c).normal(size=(4, 4))
        grid = C.tile_channels(y)
        assert grid.shape == (12, 12)
        # Two trailing cells stay black.
        np.testing.assert_array_equal(grid[8:, 4:], 0.0)

    def test_all_zero_warns_empty(self):
        with pytest.warns(UserWarning):
            grid = C.tile_channels(np.zeros((4, 2, 2)))
        assert grid.shape == (0, 0)

    def test_constant_channel_mid_gray(self):
        y = np.full((1, 3, 3), 7.0)
        grid = C.tile_channels(y)
        np.testing.assert_array_equal(grid, 0.5)

    def test_normalization_range(self):
        y = np.random.default_rng(0).normal(size=(5, 6, 6))
        grid = C.tile_channels(y)
        assert grid.min() >= 0.0 and grid.max() <= 1.0

    def test_pair_helper(self):
        low = np.random.default_rng(1).normal(size=(4, 4, 4))
        high = np.random.default_rng(2).normal(size=(4, 4, 4))
        img_l, img_h = C.visualize_latents(low, high)
        assert img_l.shape == (8, 8) and img_h.shape == (8, 8)


def naive_dft2(x: np.ndarray) -> np.ndarray:
    """O(n^2) 2-D DFT used as the independent spectrum oracle."""
    h, w = x.shape
    iu = np.outer(np.arange(h), np.arange(h))
    jv = np.outer(np.arange(w), np.arange(w))
    wh = np.exp(-2j * np.pi * iu / h)
    ww = np.exp(-2j * np.pi * jv / w)
    return wh @ x.astype(np.complex128) @ ww


class TestSpectrum:
    def test_matches_naive_dft_16x16(self):
        rng = np.random.default_rng(59)
        x = rng.uniform(0, 1, size=(16, 16))
        got = np.fft.fft2(x)
        want = naive_dft2(x)
        assert np.abs(got - want).max() < 1e-6

    def test_constant_image_single_dc_peak(self):
        spec = C.spectrum(np.full((3, 32, 32), 0.5))
        peak = np.unravel_index(np.argmax(spec), spec.shape)
        assert peak == (16, 16)
        others = spec.copy()
        others[peak] = 0
        assert others.max() < 0.05

    def test_horizontal_sinusoid_symmetric_peaks(self):
        xs = np.arange(64)
        img = np.tile(0.5 + 0.5 * np.sin(2 * np.pi * 8 * xs / 64), (64, 1))
        spec = C.spectrum(img)
        row = spec[32]  # horizontal frequency axis after shift
        peaks = np.argsort(row)[-3:]
        assert set(peaks) >= {32 - 8, 32 + 8}

    def test_pads_to_pow2(self):
        spec = C.spectrum(np.zeros((3, 48, 100)))
        assert spec.shape == (64, 128)

    def test_output_range(self):
        rng = np.random.default_rng(60)
        spec = C.spectrum(rng.uniform(0, 1, size=(3, 24, 24)))
        assert spec.min() >= 0.0 and spec.max() <= 1.0


class TestPpm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(61)
        img = rng.integers(0, 256, size=(3, 9, 13), dtype=np.uint8)
        path = tmp_path / "x.ppm"
        imageio.write_image(path, img)
        back = imageio.decode_ppm(path.read_bytes())
        np.testing.assert_array_equal(back, img)

    def test_comments_and_whitespace(self):
        img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
        data = b"P6 # comment\n# another\n 2\t2\n255\n" + img.tobytes()
        back = imageio.decode_ppm(data)
        np.testing.assert_array_equal(back, img.transpose(2, 0, 1))

    def test_bad_maxval(self):
        from freqcodec.errors import FormatError

        with pytest.raises(FormatError, match="maxval"):
            imageio.decode_ppm(b"P6\n2 2\n65535\n" + bytes(24))

    def test_truncated_pixels(self):
        from freqcodec.errors import FormatError

        with pytest.raises(FormatError, match="truncated"):
            imageio.decode_ppm(b"P6\n4 4\n255\n" + bytes(10))

    @pytest.mark.skipif(not imageio.png_available(), reason="Pillow not installed")
    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(62)
        img = rng.integers(0, 256, size=(3, 8, 8), dtype=np.uint8)
        path = tmp_path / "x.png"
        imageio.write_image(path, img)
        back = imageio.decode_image_bytes(path.read_bytes())
        np.testing.assert_array_equal(back, img)
