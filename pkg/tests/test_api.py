"""HTTP surface over a pre-generated dataset, exercised in-process."""

import math

import pytest
from fastapi.testclient import TestClient

from corridorctl.api import create_app, parse_listen
from corridorctl.errors import EngineError
from corridorctl.pareto import Orientation, distance


@pytest.fixture(scope="module")
def client(tiny_pipeline_config, tiny_dataset, tmp_path_factory):
    spec, ds, data_dir = tiny_dataset
    runs_dir = tmp_path_factory.mktemp("runs")
    app = create_app(data_dir, runs_dir, tiny_pipeline_config)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def run_id(client):
    resp = client.post("/runs", json={"now_minute": 10})
    assert resp.status_code == 201
    return resp.json()["run_id"]


def test_health(client):
    doc = client.get("/health").json()
    assert doc["status"] == "ok"
    assert doc["n_minutes"] == 12


def test_trigger_and_fetch_run(client, run_id):
    doc = client.get(f"/runs/{run_id}").json()
    assert doc["now_minute"] == 10
    assert [s["id"] for s in doc["scenarios"]] == \
        ["NoControl", "PlVsl", "AlsVsl", "AlsVsl2"]

    listing = client.get("/runs").json()["runs"]
    assert any(r["run_id"] == run_id for r in listing)


def test_repeat_trigger_is_idempotent(client, run_id):
    resp = client.post("/runs", json={"now_minute": 10})
    assert resp.status_code == 201
    assert resp.json()["run_id"] == run_id   # same inputs, same digest


def test_pareto_endpoint(client, run_id):
    doc = client.get(f"/runs/{run_id}/pareto").json()
    assert doc["run_id"] == run_id
    assert len(doc["points"]) == 4
    assert any(p["pareto"] for p in doc["points"])
    assert len(doc["selections"]) == 3


def test_recommendation_matches_selection_rule(client, run_id):
    pareto = client.get(f"/runs/{run_id}/pareto").json()["points"]
    front = [p for p in pareto if p["pareto"]]
    for w in (0.0, 0.25, 0.5, 0.75, 1.0):
        doc = client.get(f"/runs/{run_id}/recommendation",
                         params={"w": w, "p": "2"}).json()
        orientation = Orientation(w, 2.0)
        best = min(front, key=lambda p: (distance(
            (p["scaled_throughput"], p["scaled_speed"]), orientation),
            -p["scaled_throughput"], -p["scaled_speed"], p["id"]))
        assert doc["scenario_id"] == best["id"]
        assert doc["scenario"]["id"] == best["id"]
        assert doc["distance"] >= 0


def test_recommendation_p_inf(client, run_id):
    doc = client.get(f"/runs/{run_id}/recommendation",
                     params={"w": 0.5, "p": "inf"}).json()
    assert doc["p"] == "inf"
    assert math.isfinite(doc["distance"])


def test_recommendation_validation(client, run_id):
    assert client.get(f"/runs/{run_id}/recommendation",
                      params={"w": 1.5, "p": "1"}).status_code == 422
    assert client.get(f"/runs/{run_id}/recommendation",
                      params={"w": 0.5, "p": "zero"}).status_code == 422
    assert client.get(f"/runs/{run_id}/recommendation",
                      params={"p": "1"}).status_code == 422   # w required


def test_speedfield_endpoint(client, run_id):
    doc = client.get(f"/runs/{run_id}/speedfield").json()
    assert doc["scenario"] == "observed"
    assert doc["field"]["values"]
    named = client.get(f"/runs/{run_id}/speedfield",
                       params={"scenario": "AlsVsl"}).json()
    assert named["scenario"] == "AlsVsl"
    missing = client.get(f"/runs/{run_id}/speedfield",
                         params={"scenario": "nope"})
    assert missing.status_code == 404


def test_unknown_run_404(client):
    assert client.get("/runs/ffffffffffffffff").status_code == 404
    assert client.get("/runs/ffffffffffffffff/pareto").status_code == 404


def test_trigger_validation(client):
    resp = client.post("/runs", json={"now_minute": 99})
    assert resp.status_code == 422


def test_parse_listen():
    assert parse_listen("0.0.0.0:9000") == ("0.0.0.0", 9000)
    assert parse_listen("localhost:8732") == ("localhost", 8732)
    with pytest.raises(EngineError):
        parse_listen("8732")
    with pytest.raises(EngineError):
        parse_listen("host:abc")
