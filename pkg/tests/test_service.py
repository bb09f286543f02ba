import json

import pytest
from fastapi.testclient import TestClient

from autocot.client import ServiceClient
from autocot.config import RunConfig
from autocot.errors import ConfigError
from autocot.fixtures import FixtureSpec, PlantedCluster, build_fixture
from autocot.service import create_app


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    spec = FixtureSpec(
        name="svc-fixture",
        kind="planted",
        out_dir=tmp_path_factory.mktemp("svc-fixture"),
        clusters=(PlantedCluster(8, 2, template=4), PlantedCluster(8, 0, template=5)),
        seed=11,
        embed_dim=128,
        embed_seed=0,
        k=2,
        script_methods=("auto",),
    )
    return build_fixture(spec)


@pytest.fixture(scope="module")
def app():
    return create_app()


@pytest.fixture(scope="module")
def client(app):
    return TestClient(app)


def corpus_records(fixture):
    return [
        json.loads(line)
        for line in fixture.corpus_path.read_text().splitlines()
        if line.strip()
    ]


def base_payload(fixture):
    return {
        "corpus": {
            "dataset": "fixture",
            "answer_format": "number",
            "records": corpus_records(fixture),
        },
        "backend": {"script": json.loads(fixture.script_path.read_text())},
        "options": {
            "k": 2,
            "seed": fixture.expected["seed"],
            "embedder": f"hashbow:{fixture.expected['embed_dim']}:0",
        },
    }


class TestHealth:
    def test_healthz(self, client):
        response = client.get("/healthz")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"


class TestConstructEndpoint:
    def test_auto_construct(self, client, planted):
        payload = {**base_payload(planted), "source": "auto"}
        response = client.post("/construct", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert len(body["demos"]) == 2
        assert body["manifest"]["command"] == "construct"
        assert "demos.json" in body["files"]
        # returned file text parses back to the same demos
        file_demos = json.loads(body["files"]["demos.json"])
        assert file_demos == body["demos"]

    def test_manual_inline_demos(self, client, planted):
        payload = {
            **base_payload(planted),
            "source": "manual",
            "demos": [{"question": "q?", "rationale": "r is 1.", "answer": "1"}],
        }
        response = client.post("/construct", json=payload)
        assert response.status_code == 200
        assert response.json()["demos"][0]["answer"] == "1"

    def test_manual_source_needs_no_backend(self, client, planted):
        payload = {
            "corpus": {
                "dataset": "fixture",
                "answer_format": "number",
                "records": corpus_records(planted),
            },
            "source": "manual",
            "demos": [{"question": "q?", "rationale": "r is 1.", "answer": "1"}],
        }
        response = client.post("/construct", json=payload)
        assert response.status_code == 200

    def test_unknown_source_is_400(self, client, planted):
        payload = {**base_payload(planted), "source": "telepathy"}
        response = client.post("/construct", json=payload)
        assert response.status_code == 400

    def test_bad_corpus_record_is_422(self, client, planted):
        payload = base_payload(planted)
        payload["corpus"]["records"] = [{"answer": "no question field"}]
        response = client.post("/construct", json=payload)
        assert response.status_code == 422


class TestEvalEndpoint:
    def test_zero_shot_cot(self, client, planted):
        payload = {**base_payload(planted), "method": "zero-shot-cot"}
        response = client.post("/eval", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["report"]["n"] == 16
        assert body["report"]["correct"] == 14
        assert len(body["records"]) == 16
        assert body["files"]["records.csv"].startswith("id,cluster,correct")

    def test_auto_cot(self, client, planted):
        payload = {**base_payload(planted), "method": "auto-cot"}
        response = client.post("/eval", json=payload)
        assert response.status_code == 200

    def test_manifest_matches_cli_run(self, client, planted, tmp_path):
        """The service and the CLI must emit byte-identical artifacts."""
        payload = {**base_payload(planted), "method": "zero-shot-cot"}
        service_files = client.post("/eval", json=payload).json()["files"]

        from autocot.cli import main

        report = tmp_path / "report.json"
        records = tmp_path / "records.csv"
        main([
            "eval", "--dataset", "fixture", "--format", "number",
            "--data", str(planted.corpus_path),
            "--backend", f"scripted:{planted.script_path}",
            "--embedder", f"hashbow:{planted.expected['embed_dim']}:0",
            "--seed", str(planted.expected["seed"]), "--k", "2",
            "--method", "zero-shot-cot",
            "--report", str(report), "--records", str(records),
        ])
        assert report.read_text() == service_files["report.json"]
        assert records.read_text() == service_files["records.csv"]


class TestAnalyzeEndpoint:
    def test_error_tables_and_projection(self, client, planted):
        payload = {**base_payload(planted), "clusters": [2]}
        response = client.post("/analyze", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert "2" in body["error_tables"] or 2 in body["error_tables"]
        assert len(body["projection"]) == 16
        assert set(body["projection"][0]) == {"id", "x", "y", "cluster", "distance"}


class TestStreamEndpoint:
    def test_single_batch_stream(self, client, planted):
        # one batch covering the corpus: pure zero-shot, no few-shot prompts needed
        payload = {**base_payload(planted), "batch_size": 16}
        response = client.post("/stream", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["memory_size"] == 16
        assert len(body["rows"]) == 1
        assert body["rows"][0]["n"] == 16


class TestServiceClient:
    def _client(self, app):
        return ServiceClient("http://testserver", client=TestClient(app))

    def test_construct_inlines_local_files(self, app, planted, tmp_path):
        cfg = RunConfig(
            dataset="fixture",
            answer_format="number",
            data_path=str(planted.corpus_path),
            backend=f"scripted:{planted.script_path}",
            embedder=f"hashbow:{planted.expected['embed_dim']}:0",
            seed=planted.expected["seed"],
            k=2,
            source="auto",
        )
        payload = self._client(app).construct(cfg)
        assert len(payload["demos"]) == 2

    def test_eval_round_trip(self, app, planted):
        cfg = RunConfig(
            dataset="fixture",
            answer_format="number",
            data_path=str(planted.corpus_path),
            backend=f"scripted:{planted.script_path}",
            embedder=f"hashbow:{planted.expected['embed_dim']}:0",
            seed=planted.expected["seed"],
            k=2,
            method="zero-shot-cot",
        )
        payload = self._client(app).evaluate(cfg)
        assert payload["report"]["correct"] == 14

    def test_config_error_surfaces(self, app, planted):
        cfg = RunConfig(
            dataset="mystery",
            data_path=str(planted.corpus_path),
            backend=f"scripted:{planted.script_path}",
            method="zero-shot-cot",
        )
        with pytest.raises(ConfigError):
            self._client(app).evaluate(cfg)

    def test_health(self, app):
        assert self._client(app).health()["status"] == "ok"


class TestCliServerMode:
    def test_construct_via_server_flag(self, app, planted, tmp_path, monkeypatch):
        """--server routes through the HTTP client and writes results locally."""
        import autocot.client as client_module

        original_init = client_module.ServiceClient.__init__

        def patched_init(self, base_url, client=None):
            original_init(self, base_url, client=TestClient(app))

        monkeypatch.setattr(client_module.ServiceClient, "__init__", patched_init)
        from autocot.cli import main

        out = tmp_path / "demos.json"
        code = main([
            "construct", "--server", "http://svc",
            "--dataset", "fixture", "--format", "number",
            "--data", str(planted.corpus_path),
            "--backend", f"scripted:{planted.script_path}",
            "--embedder", f"hashbow:{planted.expected['embed_dim']}:0",
            "--seed", str(planted.expected["seed"]), "--k", "2",
            "--source", "auto", "--out", str(out),
        ])
        assert code == 0
        assert len(json.loads(out.read_text())) == 2
        manifest = json.loads((tmp_path / "demos.json.manifest.json").read_text())
        assert manifest["command"] == "construct"
