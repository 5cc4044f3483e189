"""Scripted HTTP client exercising the session endpoints and invariants."""

import base64
import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from freqcodec import imageio
from freqcodec import model as M
from freqcodec import service as SV
from freqcodec import training as TR


@pytest.fixture(scope="module")
def server():
    model = M.init_model(M.preset("tiny"), seed=71)
    srv = SV.create_server(model, host="127.0.0.1", port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv, model
    srv.shutdown()


def base_url(srv):
    host, port = srv.server_address
    return f"http://{host}:{port}"


def request(url, data=None, headers=None, method=None):
    req = urllib.request.Request(url, data=data, headers=headers or {}, method=method)
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return resp.status, resp.headers.get("Content-Type"), resp.read()
    except urllib.error.HTTPError as e:
        return e.code, e.headers.get("Content-Type"), e.read()


def post_json(url, payload):
    status, ctype, body = request(url, data=json.dumps(payload).encode(),
                                  headers={"Content-Type": "application/json"}, method="POST")
    return status, json.loads(body)


def get_json(url):
    status, ctype, body = request(url)
    return status, json.loads(body)


def upload(srv, img):
    status, ctype, body = request(base_url(srv) + "/sessions",
                                  data=imageio.encode_ppm(imageio.to_uint8(img)),
                                  method="POST")
    return status, json.loads(body)


def decode_image_field(payload):
    raw = base64.b64decode(payload["image_b64"])
    return imageio.decode_image_bytes(raw)


@pytest.fixture(scope="module")
def test_image():
    return TR.synthetic_dataset(1, 64, seed=72)[0]


class TestSessionLifecycle:
    def test_health(self, server):
        srv, _ = server
        status, payload = get_json(base_url(srv) + "/healthz")
        assert status == 200 and payload["status"] == "ok"

    def test_upload_returns_base_image_and_stats(self, server, test_image):
        srv, _ = server
        status, payload = upload(srv, test_image)
        assert status == 200
        assert payload["width"] == 64 and payload["height"] == 64
        assert payload["bpp_base"] > 0 and payload["bpp_enh_total"] > 0
        img = decode_image_field(payload)
        assert img.shape == (3, 64, 64)

    def test_malformed_image_400_no_session(self, server):
        srv, _ = server
        status, ctype, body = request(base_url(srv) + "/sessions", data=b"not an image",
                                      method="POST")
        assert status == 400
        payload = json.loads(body)
        assert "error" in payload

    def test_distinct_ids(self, server, test_image):
        srv, _ = server
        _, a = upload(srv, test_image)
        _, b = upload(srv, test_image)
        assert a["id"] != b["id"]

    def test_unknown_session_404(self, server):
        srv, _ = server
        status, _ = get_json(base_url(srv) + "/sessions/deadbeef00000000")
        assert status == 404
        status, _ = post_json(base_url(srv) + "/sessions/deadbeef00000000/enhance",
                              {"rois": [[0, 0, 8, 8]]})
        assert status == 404

    def test_unknown_mode_400(self, server, test_image):
        srv, _ = server
        _, payload = upload(srv, test_image)
        status, ctype, body = request(
            base_url(srv) + f"/sessions/{payload['id']}/image?mode=sideways")
        assert status == 400


class TestEnhancement:
    def test_full_cover_matches_full_decode(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        sid = session["id"]
        status, result = post_json(base_url(srv) + f"/sessions/{sid}/enhance",
                                   {"rois": [[0, 0, 64, 64]]})
        assert status == 200
        enhanced = decode_image_field(result)
        _, _, full_bytes = request(base_url(srv) + f"/sessions/{sid}/image?mode=full")
        full = imageio.decode_image_bytes(full_bytes)
        np.testing.assert_array_equal(enhanced, full)
        # Accounting: everything was sent once.
        status, stats = get_json(base_url(srv) + f"/sessions/{sid}")
        assert stats["bpp_enh_sent"] > 0
        assert stats["bpp_base"] + stats["bpp_enh_sent"] >= stats["bpp_total"] * 0.5
        assert stats["psnr_current"] == stats["psnr_full"]

    def test_repeat_roi_sends_zero_delta(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        sid = session["id"]
        url = base_url(srv) + f"/sessions/{sid}/enhance"
        _, first = post_json(url, {"rois": [[0, 0, 32, 32]]})
        assert first["bpp_enh_sent_delta"] > 0
        _, second = post_json(url, {"rois": [[0, 0, 32, 32]]})
        assert second["bpp_enh_sent_delta"] == 0
        assert second["bpp_enh_sent"] == first["bpp_enh_sent"]
        # The nested smaller ROI is also covered already.
        _, third = post_json(url, {"rois": [[4, 4, 8, 8]]})
        assert third["bpp_enh_sent_delta"] == 0

    def test_disjoint_roi_positive_delta_first_region_stable(self, server, test_image):
        srv, model = server
        _, session = upload(srv, test_image)
        sid = session["id"]
        url = base_url(srv) + f"/sessions/{sid}/enhance"
        _, first = post_json(url, {"rois": [[0, 0, 16, 16]]})
        img_a = decode_image_field(first)
        _, second = post_json(url, {"rois": [[48, 48, 16, 16]]})
        img_b = decode_image_field(second)
        assert second["bpp_enh_sent_delta"] > 0
        # Pixels inside the first ROI keep their enhanced values.
        np.testing.assert_array_equal(img_a[:, :16, :16], img_b[:, :16, :16])

    def test_monotone_accounting_and_bound(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        sid = session["id"]
        url = base_url(srv) + f"/sessions/{sid}/enhance"
        sent = [0.0]
        rng = np.random.default_rng(73)
        for _ in range(5):
            x, y = int(rng.integers(0, 48)), int(rng.integers(0, 48))
            _, result = post_json(url, {"rois": [[x, y, 16, 16]]})
            assert result["bpp_enh_sent"] >= sent[-1]
            sent.append(result["bpp_enh_sent"])
        status, stats = get_json(base_url(srv) + f"/sessions/{sid}")
        n_tiles = len(stats["latent_tiles"])
        overhead = (SV.TILE_HEADER_BYTES + 64 + 2 * 16) * 8 * n_tiles / (64 * 64)
        assert stats["bpp_enh_sent"] <= stats["bpp_enh_total"] + overhead

    def test_out_of_bounds_roi_400(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        status, result = post_json(base_url(srv) + f"/sessions/{session['id']}/enhance",
                                   {"rois": [[60, 60, 20, 20]]})
        assert status == 400

    def test_empty_rois_400(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        status, result = post_json(base_url(srv) + f"/sessions/{session['id']}/enhance",
                                   {"rois": []})
        assert status == 400

    def test_cumulative_rois_mirror_requests(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        url = base_url(srv) + f"/sessions/{session['id']}/enhance"
        _, r1 = post_json(url, {"rois": [[0, 0, 8, 8]]})
        _, r2 = post_json(url, {"rois": [[16, 16, 8, 8], [32, 0, 8, 8]]})
        assert r2["cumulative_rois"] == [[0, 0, 8, 8], [16, 16, 8, 8], [32, 0, 8, 8]]


class TestSpectrumEndpoint:
    def test_modes_and_energy_ordering(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        sid = session["id"]
        for mode in ("base", "current", "full"):
            status, ctype, body = request(
                base_url(srv) + f"/sessions/{sid}/spectrum?mode={mode}")
            assert status == 200
            assert ctype in ("image/png", "image/x-portable-pixmap")
            img = imageio.decode_image_bytes(body)
            assert img.shape[1] >= 64

    def test_unknown_spectrum_mode(self, server, test_image):
        srv, _ = server
        _, session = upload(srv, test_image)
        status, ctype, body = request(
            base_url(srv) + f"/sessions/{session['id']}/spectrum?mode=wavelet")
        assert status == 400


class TestConcurrency:
    def test_sessions_do_not_interleave(self, server):
        srv, _ = server
        images = TR.synthetic_dataset(2, 64, seed=74)
        sessions = []
        for img in images:
            _, payload = upload(srv, img)
            sessions.append(payload["id"])
        errors = []

        def hammer(sid, seed):
            rng = np.random.default_rng(seed)
            url = base_url(srv) + f"/sessions/{sid}/enhance"
            try:
                for _ in range(4):
                    x, y = int(rng.integers(0, 40)), int(rng.integers(0, 40))
                    status, result = post_json(url, {"rois": [[x, y, 16, 16]]})
                    assert status == 200
            except Exception as e:  # noqa: BLE001
                errors.append(e)

        threads = [threading.Thread(target=hammer, args=(sid, i)) for i, sid in enumerate(sessions)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        # Each session's accounting stands alone and stays within bounds.
        for sid in sessions:
            status, stats = get_json(base_url(srv) + f"/sessions/{sid}")
            assert status == 200
            assert 0 < stats["bpp_enh_sent"]


class TestLruEviction:
    def test_cap_evicts_oldest(self):
        model = M.init_model(M.preset("tiny"), seed=75)
        service = SV.CodecService(model, session_cap=2)
        img = TR.synthetic_dataset(1, 32, seed=76)[0]
        body = imageio.encode_ppm(imageio.to_uint8(img))
        ids = [service.create_session(body)[1]["id"] for _ in range(3)]
        assert service.store.get(ids[0]) is None
        assert service.store.get(ids[1]) is not None
        assert service.store.get(ids[2]) is not None
