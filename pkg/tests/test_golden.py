"""Golden binary fixtures: the wire formats must stay byte-stable."""

from pathlib import Path

import numpy as np

from freqcodec import bitstream as BS
from freqcodec.entropy import ans_decode
from freqcodec.model import load_weights, parse_weight_entries

import golden_fixtures as G

GOLDEN = Path(__file__).parent / "golden"

CONTAINER_SHA = "499ac496250a3c83dd2d434bb91ef79d35394996af6469f5dc20f9e5737467b2"
WEIGHTS_SHA = "723656465a27832c0793b879561839393e4cf50d353db9fdddb8662c8db97889"


def sha256(data: bytes) -> str:
    import hashlib

    return hashlib.sha256(data).hexdigest()


class TestGoldenContainer:
    def test_regeneration_matches_committed_bytes(self):
        committed = (GOLDEN / "container.bin").read_bytes()
        assert BS.serialize(G.golden_container()) == committed
        assert sha256(committed) == CONTAINER_SHA

    def test_parse_structure(self):
        c = BS.parse((GOLDEN / "container.bin").read_bytes())
        assert c.header.width == 48 and c.header.height == 41
        assert c.header.latent_h == 3 and c.header.latent_w == 4
        assert c.header.model_id == bytes.fromhex("00112233445566aa")
        assert c.base is not None
        assert c.tiled and len(c.enhancement) == 1
        assert c.enhancement[0].th == 2 and c.enhancement[0].tw == 2

    def test_serialize_parse_bijection_on_golden(self):
        committed = (GOLDEN / "container.bin").read_bytes()
        assert BS.serialize(BS.parse(committed)) == committed

    def test_payload_decodes_to_frozen_symbols(self):
        c = BS.parse((GOLDEN / "container.bin").read_bytes())
        table = G.golden_table()
        got = ans_decode(c.base.payload, table, (2, 3, 4))
        np.testing.assert_array_equal(got, G.golden_symbols())


class TestGoldenWeights:
    def test_regeneration_matches_committed_bytes(self):
        committed = (GOLDEN / "weights.flcw").read_bytes()
        assert G.golden_weights_bytes() == committed
        assert sha256(committed) == WEIGHTS_SHA

    def test_loads_and_round_trips(self):
        committed = (GOLDEN / "weights.flcw").read_bytes()
        model = load_weights(str(GOLDEN / "weights.flcw"))
        assert model.cfg.channels == (8, 16)
        assert model.weight_bytes() == committed

    def test_entry_names_stable(self):
        entries = parse_weight_entries((GOLDEN / "weights.flcw").read_bytes())
        assert "config.channels" in entries
        assert "analysis.0.rb_h.conv1.w" in entries
        assert "density_h.h3" in entries
