from __future__ import annotations

import base64
import json

import httpx
import numpy as np
import pytest

from modelserver import StubScript, fingerprint, serve
from modelserver.stubs import image_digest


@pytest.fixture
def oracle_server():
    b64 = base64.b64encode(b"figure-one").decode()
    script = StubScript(mode="oracle",
                        truth={(image_digest(b64), "object"): "chair"},
                        seed=0)
    server = serve(script)
    try:
        yield server, b64
    finally:
        server.shutdown()


def post(server, path, payload):
    return httpx.post(server.url + path, json=payload, timeout=5)


class TestProtocol:
    def test_health(self, oracle_server):
        server, _ = oracle_server
        assert post(server, "/v1/health", {}).json() == {"status": "ok"}

    def test_binary_truthful_yes_at_zero(self, oracle_server):
        server, b64 = oracle_server
        body = post(server, "/v1/answer", {
            "prompt": "Is the object of the figure chair? Answer 'Yes' or 'No'.",
            "want_logprobs": True, "image_b64": b64,
        }).json()
        assert body["text"] == "Yes"
        assert body["cumulative_logprob"] == 0.0
        assert sum(lp for _, lp in body["token_logprobs"]) == body["cumulative_logprob"]

    def test_binary_false_concept_says_no(self, oracle_server):
        server, b64 = oracle_server
        body = post(server, "/v1/answer", {
            "prompt": "Is the object of the figure table? Answer 'Yes' or 'No'.",
            "want_logprobs": True, "image_b64": b64,
        }).json()
        assert body["text"] == "No"
        assert body["cumulative_logprob"] < 0

    def test_embed_deterministic_unit_vectors(self, oracle_server):
        server, _ = oracle_server
        a = post(server, "/v1/embed", {"texts": ["chair", "chair"]}).json()["vectors"]
        b = post(server, "/v1/embed", {"texts": ["chair"]}).json()["vectors"]
        assert a[0] == a[1] == b[0]
        assert len(a[0]) == 64
        assert np.linalg.norm(a[0]) == pytest.approx(1.0)

    def test_malformed_json_is_400(self, oracle_server):
        server, _ = oracle_server
        resp = httpx.post(server.url + "/v1/answer", content=b"{nope",
                          headers={"Content-Type": "application/json"}, timeout=5)
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_missing_prompt_is_400(self, oracle_server):
        server, _ = oracle_server
        assert post(server, "/v1/answer", {"want_logprobs": True}).status_code == 400

    def test_empty_texts_is_400(self, oracle_server):
        server, _ = oracle_server
        assert post(server, "/v1/embed", {"texts": []}).status_code == 400

    def test_unknown_path_is_404(self, oracle_server):
        server, _ = oracle_server
        assert post(server, "/v1/other", {}).status_code == 404

    def test_stats_counts_requests(self, oracle_server):
        server, _ = oracle_server
        post(server, "/v1/health", {})
        stats = httpx.get(server.url + "/v1/stats", timeout=5).json()
        assert stats["requests"] >= 1
        assert stats["max_in_flight"] >= 1


class TestScriptedMode:
    def test_canned_reply_and_unknown_fingerprint(self):
        fp = fingerprint("ping", None)
        server = serve(StubScript(mode="scripted",
                                  entries={fp: {"text": "pong", "cumulative_logprob": -0.5}}))
        try:
            body = post(server, "/v1/answer", {"prompt": "ping", "want_logprobs": True}).json()
            assert body["text"] == "pong"
            assert body["cumulative_logprob"] == -0.5
            missing = post(server, "/v1/answer", {"prompt": "other", "want_logprobs": True})
            assert missing.status_code == 404
        finally:
            server.shutdown()


class TestJudgeMode:
    @pytest.fixture
    def judge(self):
        server = serve(StubScript(mode="judge"))
        try:
            yield server
        finally:
            server.shutdown()

    def judge_prompt(self, gold, candidate):
        return ("Question: what is the object shown in the figure? "
                f"Reference answer: '{gold}'. Candidate answer: '{candidate}'. "
                "Are the candidate and reference semantically equivalent? "
                "Answer 'Yes' or 'No'.")

    def test_echo_judge(self, judge):
        yes = post(judge, "/v1/answer",
                   {"prompt": self.judge_prompt("chair", "Chair"), "want_logprobs": True})
        no = post(judge, "/v1/answer",
                  {"prompt": self.judge_prompt("chainsaw", "pet throw"), "want_logprobs": True})
        assert yes.json()["text"] == "Yes"
        assert no.json()["text"] == "No"


def test_config_round_trip(tmp_path):
    b64 = base64.b64encode(b"x").decode()
    config = {
        "mode": "oracle", "seed": 7, "error_rate": 0.25,
        "truth": [{"image_sha256": image_digest(b64), "aspect": "object",
                   "concept_id": "chair"}],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    script = StubScript.from_config(json.loads(path.read_text()))
    assert script.seed == 7
    assert script.error_rate == 0.25
    assert script.truth[(image_digest(b64), "object")] == "chair"


def test_server_twin_matches_client_oracle():
    """Same truth, seed, and request bytes give identical decisions on both
    the client-side mock and the server."""
    from figclass import Figure, make_oracle_backend, render_binary
    from figclass.taxonomy import Concept

    labels = [f"thing {i}" for i in range(12)]
    figures, truth, server_truth = [], {}, {}
    for i, label in enumerate(labels):
        b64 = base64.b64encode(f"img-{i}".encode()).decode()
        fig = Figure(id=f"f{i}", image_b64=b64, ground_truth={"object": label})
        figures.append(fig)
        truth[(fig.id, "object")] = label
        server_truth[(image_digest(b64), "object")] = label

    client = make_oracle_backend(truth, error_rate=0.5, rng_seed=21)
    server = serve(StubScript(mode="oracle", truth=server_truth,
                              error_rate=0.5, seed=21))
    try:
        for fig in figures:
            for asked in ("thing 0", fig.ground_truth["object"]):
                prompt = render_binary("object", Concept(asked, asked, "object")).text
                local = client.answer(prompt, fig)
                remote = post(server, "/v1/answer",
                              {"prompt": prompt, "want_logprobs": True,
                               "image_b64": fig.image_b64}).json()
                assert remote["text"] == local.text
                assert remote["cumulative_logprob"] == pytest.approx(
                    local.cumulative_logprob, abs=1e-9)
    finally:
        server.shutdown()
