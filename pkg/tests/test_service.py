"""HTTP service: routes, validation, and response contracts."""
import json

import pytest
from fastapi.testclient import TestClient

from phishdom import data
from phishdom.config import RunConfig
from phishdom.service import create_app
from phishdom.training import CHECKPOINT_NAME, train

SMALL = {
    "seed": 11,
    "url": {"dim": 16, "num_layers": 1, "max_len": 60, "kernel": 3, "dilations": [1], "pool_sizes": [1]},
    "graph": {"feature_dim": 12, "num_buckets": 128, "dim": 10, "num_layers": 1},
    "fusion": {"dim": 12, "depth": 1, "ffn_multiplier": 2},
    "train": {"epochs": 1, "batch_size": 4},
}


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    """Trained small model behind a TestClient, plus the corpus rows."""
    root = tmp_path_factory.mktemp("svc")
    config = RunConfig.from_dict(SMALL)
    manifest = data.make_synthetic(root / "corpus", n=8, seed=21)
    dataset, _ = data.ingest(manifest, config)
    train(config, dataset, out_dir=root / "run")
    app = create_app(root / "run" / CHECKPOINT_NAME, config)
    rows = [json.loads(l) for l in manifest.read_text().splitlines()]
    docs = [
        (r["url"], (root / "corpus" / r["html_path"]).read_text(), r["label"])
        for r in rows
    ]
    return TestClient(app), config, docs


class TestMeta:
    def test_health(self, served):
        client, _, _ = served
        assert client.get("/health").json() == {"status": "ok"}

    def test_info(self, served):
        client, config, _ = served
        payload = client.get("/info").json()
        assert payload["config_hash"] == config.hash()
        assert payload["num_parameters"] > 0


class TestPredict:
    def test_verdict_strings_and_rounds(self, served):
        client, config, docs = served
        url, html, _ = docs[0]
        resp = client.post("/predict", json={"url": url, "html": html})
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["verdict"] in ("malicious", "benign")
        assert 0.0 <= payload["score"] <= 1.0
        assert len(payload["rounds"]) == config.partition.iter_per
        for rnd in payload["rounds"]:
            assert len(rnd["group_ids"]) == config.partition.iter_num
            assert rnd["pred"] in (0, 1)
        assert payload["localization"] is None

    def test_localization_only_when_malicious(self, served):
        client, _, docs = served
        seen_malicious = False
        for url, html, _ in docs:
            resp = client.post(
                "/predict", json={"url": url, "html": html, "localize": True}
            )
            payload = resp.json()
            if payload["verdict"] == "malicious":
                seen_malicious = True
                loc = payload["localization"]
                assert loc is not None
                assert loc["flagged_group_ids"]
                assert loc["flagged_node_ids"]
                counts = dict(loc["ranked"])
                for gid in loc["flagged_group_ids"]:
                    assert counts[gid] == max(counts.values())
            else:
                assert payload["localization"] is None
        assert seen_malicious, "corpus produced no malicious verdict to exercise"

    def test_equal_seed_equal_response(self, served):
        client, _, docs = served
        url, html, _ = docs[0]
        body = {"url": url, "html": html, "eval_seed": 7}
        a = client.post("/predict", json=body).json()
        b = client.post("/predict", json=body).json()
        assert a == b

    def test_blank_html_rejected(self, served):
        client, _, _ = served
        resp = client.post("/predict", json={"url": "http://x.test/", "html": ""})
        assert resp.status_code == 422
        resp = client.post("/predict", json={"url": "http://x.test/", "html": "   "})
        assert resp.status_code == 422

    def test_missing_field_rejected(self, served):
        client, _, _ = served
        resp = client.post("/predict", json={"url": "http://x.test/"})
        assert resp.status_code == 422
