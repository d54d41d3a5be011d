import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from miracle.data import DEFAULT_SCHEMA
from miracle.errors import ConfigError, RemoteError, SchemaError
from miracle.remarks import (CompletionConfig, HashingEmbedder, KnowledgeBank,
                             Remark, RemarkChannel, build_payload, generate_remark,
                             load_default_assets, projection_checksum, stub_remark,
                             frozen_projection, summarize, _hash_bin)


def fields(**overrides):
    base = {}
    for f in DEFAULT_SCHEMA.fields:
        base[f.name] = 1.0 if f.kind == "continuous" else "x"
    base.update(age=67, sex="female", smoking_status="never", asa_class="2",
                tumor_stage="IA", procedure_type="lobectomy")
    base.update(overrides)
    return base


class TestSummarize:
    def test_deterministic(self):
        assert summarize(fields()).text == summarize(fields()).text

    def test_traceability(self):
        assert "67" in summarize(fields(age=67)).text

    def test_canonical_order_ignores_input_order(self):
        a = fields()
        b = dict(reversed(list(a.items())))
        assert summarize(a).text == summarize(b).text

    def test_missing_field(self):
        broken = fields()
        del broken["age"]
        with pytest.raises(SchemaError):
            summarize(broken)

    def test_every_field_named_once(self):
        text = summarize(fields()).text
        assert text.count("pack-years") == 1
        assert text.count("DLCO") == 1


class _CannedHandler(BaseHTTPRequestHandler):
    canned = "elevated risk due to low DLCO"
    requests: list = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        _CannedHandler.requests.append(json.loads(body))
        resp = json.dumps({"choices": [{"message": {"content": self.canned}}]})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(resp.encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def canned_server():
    server = HTTPServer(("127.0.0.1", 0), _CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _CannedHandler.requests = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


class TestGenerateRemark:
    def test_stub_mode_deterministic(self):
        bank, prompt = load_default_assets()
        config = CompletionConfig(stub_mode=True)
        s = summarize(fields(fev1_pct=45.0))
        r1 = generate_remark(s, bank, prompt, config, c_fields=fields(fev1_pct=45.0))
        r2 = generate_remark(s, bank, prompt, config, c_fields=fields(fev1_pct=45.0))
        assert r1.text == r2.text and r1.origin == "stub"
        assert "fev1_pct" in r1.text

    def test_endpoint_passthrough(self, canned_server):
        bank, prompt = load_default_assets()
        config = CompletionConfig(endpoint_url=canned_server, stub_mode=False,
                                  model_name="test-model")
        remark = generate_remark(summarize(fields()), bank, prompt, config)
        assert remark.text == "elevated risk due to low DLCO"
        assert remark.origin == "llm_generated"

    def test_payload_contains_parts_once_in_order(self, canned_server):
        bank, prompt = load_default_assets()
        config = CompletionConfig(endpoint_url=canned_server, stub_mode=False)
        summary = summarize(fields())
        generate_remark(summary, bank, prompt, config)
        payload = _CannedHandler.requests[-1]
        content = payload["messages"][0]["content"]
        for part in (summary.text, bank.text, prompt):
            assert content.count(part) == 1
        assert content.index(summary.text) < content.index(bank.text) < content.index(prompt)
        assert payload["max_tokens"] == 2000
        assert payload["temperature"] == 0.9

    def test_unreachable_endpoint_raises_remote_error(self):
        bank, prompt = load_default_assets()
        config = CompletionConfig(endpoint_url="http://127.0.0.1:1/nope",
                                  stub_mode=False, retries=2, timeout_s=0.2)
        with pytest.raises(RemoteError):
            generate_remark(summarize(fields()), bank, prompt, config)


class TestEmbedding:
    def test_hashing_hand_oracle(self):
        emb = HashingEmbedder()
        vec = emb.embed("risk risk factor")
        assert np.linalg.norm(vec) == pytest.approx(1.0)
        expected = np.zeros(768)
        expected[_hash_bin("risk")] += 2.0
        expected[_hash_bin("factor")] += 1.0
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(vec, expected)

    def test_identical_text_identical_vector(self):
        channel = RemarkChannel()
        r = Remark(text="low DLCO and heavy smoking history", origin="stub")
        np.testing.assert_array_equal(channel.embed_remark(r), channel.embed_remark(r))

    def test_degenerate_text_flagged(self):
        channel = RemarkChannel()
        with pytest.warns(UserWarning, match="degenerate"):
            out = channel.embed_remark(Remark(text="???", origin="stub"))
        np.testing.assert_array_equal(out, np.zeros(768))

    def test_truncation_warns(self):
        emb = HashingEmbedder()
        long_text = " ".join(f"tok{i}" for i in range(5000))
        with pytest.warns(UserWarning, match="truncating"):
            emb.embed(long_text)

    def test_projection_frozen_and_checksummed(self):
        p1, p2 = frozen_projection(), frozen_projection()
        np.testing.assert_array_equal(p1, p2)
        assert projection_checksum(p1) == projection_checksum(p2)
        # near-orthogonal: preserves norms
        v = np.random.default_rng(0).standard_normal(768)
        assert np.linalg.norm(p1 @ v) == pytest.approx(np.linalg.norm(v))

    def test_edited_remark_same_path(self):
        channel = RemarkChannel()
        text = "patient shows reduced pulmonary reserve"
        gen = Remark(text=text, origin="llm_generated", model_name="m")
        edited = Remark(text=text, origin="clinician_edited", model_name="m")
        np.testing.assert_array_equal(channel.embed_remark(gen),
                                      channel.embed_remark(edited))

    def test_dimensions(self):
        channel = RemarkChannel()
        out = channel.embed_remark(Remark(text="hello world", origin="stub"))
        assert out.shape == (768,)


class TestKnowledgeBank:
    def test_empty_bank_rejected(self, tmp_path):
        path = tmp_path / "bank.txt"
        path.write_text("   \n")
        with pytest.raises(ConfigError):
            KnowledgeBank.load(path)

    def test_default_assets_load(self):
        bank, prompt = load_default_assets()
        assert bank.text.strip() and prompt.strip()


def test_stub_pipeline_pure_function():
    c = fields(fev1_pct=40.0, smoking_pack_years=50.0)
    channel = RemarkChannel()

    def run():
        s = summarize(c)
        m = stub_remark(s, c)
        return channel.embed_remark(m)

    np.testing.assert_array_equal(run(), run())
