"""
Tests for the FastAPI application routes in designlab/main.py.

The TestClient runs the real lifespan (init_db), which is fine: the ledger
engine is already pointed at a temp file by ``patched_config``, so startup
just creates the tables there.
"""

import pytest

from fastapi.testclient import TestClient

import designlab.main as main_module

from designlab.db import record_run


@pytest.fixture()
def client(patched_config):
    """TestClient backed by the patched temp ledger."""
    with TestClient(main_module.app, raise_server_exceptions=True) as c:
        yield c


# ---------------------------------------------------------------------------
# GET /api/bounds
# ---------------------------------------------------------------------------


class TestBoundList:
    def test_lists_schemas(self, client):
        resp = client.get("/api/bounds")
        assert resp.status_code == 200
        body = resp.json()
        assert "levy" in body
        assert "properties" in body["levy"]["params"]


# ---------------------------------------------------------------------------
# POST /api/bound/{name}
# ---------------------------------------------------------------------------


class TestBound:
    def test_levy(self, client):
        resp = client.post("/api/bound/levy", json={"eta": 2, "d": 10**6, "delta": 0.1})
        assert resp.status_code == 200
        body = resp.json()
        assert body["name"] == "levy"
        assert body["bound"] == pytest.approx(6.6e-8, rel=0.01)

    def test_clamped_bound_serializes_infinity(self, client):
        resp = client.post("/api/bound/geoment", json={"n": 10, "k": 100, "delta": 0})
        assert resp.status_code == 200
        body = resp.json()
        assert body["bound"] == 1.0
        assert body["raw"] == "Infinity"

    def test_unknown_bound_is_404(self, client):
        resp = client.post("/api/bound/nope", json={})
        assert resp.status_code == 404

    def test_bad_params_are_422(self, client):
        resp = client.post("/api/bound/levy", json={"eta": -1, "d": 4, "delta": 0.1})
        assert resp.status_code == 422

    def test_precondition_is_422(self, client):
        params = {"C": 4, "a": 1, "K": 2, "alpha": 1, "d": 4, "k": 2, "delta": 0.1}
        resp = client.post("/api/bound/poly", json=params)
        assert resp.status_code == 422


# ---------------------------------------------------------------------------
# POST /api/certify
# ---------------------------------------------------------------------------


class TestCertify:
    def test_clifford_passes(self, client):
        resp = client.post(
            "/api/certify",
            json={"ensemble": {"name": "clifford1"}, "k": 2, "eps": 1e-9, "seed": 1},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["pass"] is True
        assert body["mode"] == "exhaustive"

    def test_run_is_recorded(self, client):
        client.post(
            "/api/certify",
            json={"ensemble": {"name": "pauli1"}, "k": 1, "eps": 0.1, "seed": 2},
        )
        runs = client.get("/api/runs", params={"command": "certify"}).json()
        assert len(runs) == 1
        assert runs[0]["seed"] == 2

    def test_missing_k_is_422(self, client):
        body = {"ensemble": {"name": "pauli1"}, "eps": 1}
        resp = client.post("/api/certify", json=body)
        assert resp.status_code == 422

    def test_unknown_ensemble_is_404(self, client):
        resp = client.post(
            "/api/certify", json={"ensemble": {"name": "nope"}, "k": 1, "eps": 0.1}
        )
        assert resp.status_code == 404


# ---------------------------------------------------------------------------
# GET /api/runs
# ---------------------------------------------------------------------------


class TestRuns:
    def test_empty(self, client):
        assert client.get("/api/runs").json() == []

    def test_lists_newest_first(self, client):
        first = record_run("certify", seed=1)
        second = record_run("experiment", seed=2, config_hash="abc")
        body = client.get("/api/runs").json()
        assert [r["id"] for r in body] == [second.id, first.id]

    def test_filter_by_hash(self, client):
        record_run("experiment", config_hash="abc")
        record_run("experiment", config_hash="def")
        body = client.get("/api/runs", params={"config_hash": "abc"}).json()
        assert [r["config_hash"] for r in body] == ["abc"]

    def test_single_run(self, client):
        row = record_run("certify", passed=True)
        resp = client.get(f"/api/runs/{row.id}")
        assert resp.status_code == 200
        assert resp.json()["passed"] is True

    def test_missing_run_is_404(self, client):
        assert client.get("/api/runs/999").status_code == 404
