import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from unvd import embedding
from unvd.api import ServiceContext, create_app
from unvd.auth import issue_token, verify_token, InvalidToken
from unvd.fixtures import WARM_CONTRACT
from unvd.ingestion import FixtureProvider, fetch_media
from unvd.metadata_store import MetadataStore
from unvd.pipeline import InMemoryBroker, Pipeline
from unvd.vector_store import VectorRecord, VectorStore

SECRET = "test-secret"


@pytest.fixture(scope="module")
def ingested(two_collection_fixture):
    vectors = VectorStore()
    metadata = MetadataStore()
    pipeline = Pipeline(
        broker=InMemoryBroker(),
        metadata=metadata,
        vectors=vectors,
        provider=FixtureProvider(two_collection_fixture),
        embed_fn=embedding.embed_bytes,
        fetch_fn=fetch_media,
        visibility_timeout=10.0,
        backoffs=(0.01, 0.02, 0.04),
    )
    pipeline.enqueue_contract("ethereum", WARM_CONTRACT)
    pipeline.run_until_quiescent(concurrency=4, timeout=60)
    return vectors, metadata, pipeline


@pytest.fixture(scope="module")
def client(ingested):
    vectors, metadata, pipeline = ingested
    ctx = ServiceContext(
        vectors=vectors, metadata=metadata, pipeline=pipeline,
        secret=SECRET, admin_user="admin", admin_pass="hunter2",
    )
    return TestClient(create_app(ctx), raise_server_exceptions=False)


def auth_header(client):
    r = client.post("/auth/login", json={"username": "admin", "password": "hunter2"})
    return {"Authorization": f"Bearer {r.json()['token']}"}


class TestAuth:
    def test_login_and_verify(self, client):
        r = client.post("/auth/login", json={"username": "admin", "password": "hunter2"})
        assert r.status_code == 200
        assert verify_token(r.json()["token"], SECRET) == "admin"

    def test_bad_credentials(self, client):
        r = client.post("/auth/login", json={"username": "admin", "password": "nope"})
        assert r.status_code == 401

    def test_tampered_signature(self, client):
        token = issue_token("admin", SECRET)
        body, sig = token.split(".")
        flipped = ("A" if sig[0] != "A" else "B") + sig[1:]
        r = client.get("/admin/analytics",
                       headers={"Authorization": f"Bearer {body}.{flipped}"})
        assert r.status_code == 401

    def test_expired_token(self, client):
        token = issue_token("admin", SECRET, lifetime_seconds=-1)
        with pytest.raises(InvalidToken):
            verify_token(token, SECRET)
        r = client.get("/admin/analytics", headers={"Authorization": f"Bearer {token}"})
        assert r.status_code == 401

    def test_missing_token(self, client):
        assert client.get("/admin/analytics").status_code == 401


class TestSearch:
    def test_self_retrieval(self, client, two_collection_fixture):
        png = (two_collection_fixture / "media" / "warm3.png").read_bytes()
        b64 = base64.b64encode(png).decode("ascii")
        r = client.post("/search", json={"image_base64": b64, "top_k": 1})
        assert r.status_code == 200
        top = r.json()["results"][0]
        assert top["id"] == f"ethereum:{WARM_CONTRACT}:3"
        assert top["distance"] <= 1e-6
        assert r.json()["embedder"]["dimension"] == 2016

    def test_top_k_truncation_and_order(self, client, two_collection_fixture):
        png = (two_collection_fixture / "media" / "warm0.png").read_bytes()
        b64 = base64.b64encode(png).decode("ascii")
        r = client.post("/search", json={"image_base64": b64, "top_k": 3})
        results = r.json()["results"]
        assert len(results) == 3
        dists = [x["distance"] for x in results]
        assert dists == sorted(dists)

    def test_bad_base64(self, client):
        r = client.post("/search", json={"image_base64": "@@@"})
        assert r.status_code == 400

    def test_top_k_out_of_range(self, client):
        r = client.post("/search", json={"image_base64": "aGk=", "top_k": 1000})
        assert r.status_code == 422

    def test_unknown_namespace(self, client, two_collection_fixture):
        png = (two_collection_fixture / "media" / "warm0.png").read_bytes()
        b64 = base64.b64encode(png).decode("ascii")
        r = client.post("/search", json={"image_base64": b64, "namespace": "nope"})
        assert r.status_code == 404

    def test_matches_direct_library_calls(self, client, ingested, two_collection_fixture):
        vectors, _, _ = ingested
        png = (two_collection_fixture / "media" / "warm9.png").read_bytes()
        b64 = base64.b64encode(png).decode("ascii")
        api = client.post("/search", json={"image_base64": b64, "top_k": 5}).json()["results"]
        direct = vectors.query("main", embedding.embed_base64(b64), 5)
        assert [x["id"] for x in api] == [r.id for r in direct]
        for x, r in zip(api, direct):
            assert abs(x["distance"] - r.distance) < 1e-12


class TestVisualize:
    def test_deterministic_points(self, client, ingested):
        vectors, _, _ = ingested
        ids = [r for r, _ in [(f"ethereum:{WARM_CONTRACT}:{i}", None) for i in range(10)]]
        body = {"vector_ids": ids, "seed": 7, "perplexity": 3}
        r1 = client.post("/visualize", json=body)
        r2 = client.post("/visualize", json=body)
        assert r1.status_code == 200
        assert len(r1.json()["points"]) == 10
        assert r1.json()["points"] == r2.json()["points"]

    def test_too_few(self, client):
        ids = [f"ethereum:{WARM_CONTRACT}:{i}" for i in range(3)]
        r = client.post("/visualize", json={"vector_ids": ids})
        assert r.status_code == 422

    def test_unknown_id(self, client):
        ids = [f"ethereum:{WARM_CONTRACT}:{i}" for i in range(4)] + ["nope:x:1"]
        r = client.post("/visualize", json={"vector_ids": ids})
        assert r.status_code == 404

    def test_raw_vectors_path(self, client):
        rng = np.random.default_rng(0)
        vecs = rng.normal(size=(8, 16)).tolist()
        r = client.post("/visualize", json={"vectors": vecs, "seed": 1, "perplexity": 2})
        assert r.status_code == 200
        assert len(r.json()["points"]) == 8


class TestAdmin:
    def test_enqueue_tasks_analytics_flow(self, client, ingested):
        headers = auth_header(client)
        from unvd.fixtures import COOL_CONTRACT
        r = client.post("/admin/enqueue",
                        json={"address": COOL_CONTRACT}, headers=headers)
        assert r.status_code == 200
        _, _, pipeline = ingested
        pipeline.run_until_quiescent(concurrency=4, timeout=60)
        r = client.get("/admin/tasks", headers=headers)
        assert r.status_code == 200
        tasks = r.json()["tasks"]
        assert all(t["status"] == "done" for t in tasks)
        r = client.get("/admin/analytics", headers=headers)
        assert r.status_code == 200
        body = r.json()
        assert body["nfts"]["embedded"] == 50
        assert body["vectors"] == 50
        workers = body["workers"]
        assert workers["processed"] == workers["succeeded"] + workers["failed"]

    def test_duplicate_enqueue_conflict(self, client):
        headers = auth_header(client)
        addr = "0x" + "c" * 40
        # unknown in the fixture: the contract task will fail, but enqueue
        # itself succeeds once and conflicts while pending
        r1 = client.post("/admin/enqueue", json={"address": addr}, headers=headers)
        assert r1.status_code == 200
        r2 = client.post("/admin/enqueue", json={"address": addr}, headers=headers)
        assert r2.status_code == 409

    def test_bad_address_422(self, client):
        r = client.post("/admin/enqueue", json={"address": "0xBAD"},
                        headers=auth_header(client))
        assert r.status_code == 422

    def test_retry_done_task_conflict(self, client):
        headers = auth_header(client)
        tasks = client.get("/admin/tasks", params={"status": "done"},
                           headers=headers).json()["tasks"]
        r = client.post(f"/admin/tasks/{tasks[0]['task_id']}/retry", headers=headers)
        assert r.status_code == 409

    def test_retry_unknown_task(self, client):
        r = client.post("/admin/tasks/nope/retry", headers=auth_header(client))
        assert r.status_code == 404

    def test_tasks_pagination(self, client):
        headers = auth_header(client)
        page1 = client.get("/admin/tasks", params={"limit": 10}, headers=headers).json()
        assert len(page1["tasks"]) == 10
        page2 = client.get("/admin/tasks",
                           params={"limit": 10, "cursor": page1["next_cursor"]},
                           headers=headers).json()
        ids1 = {t["task_id"] for t in page1["tasks"]}
        ids2 = {t["task_id"] for t in page2["tasks"]}
        assert not ids1 & ids2


class TestMalformedBodies:
    @pytest.mark.parametrize("path", ["/search", "/visualize", "/auth/login",
                                      "/admin/enqueue"])
    def test_garbage_json_is_4xx(self, client, path):
        r = client.post(path, content=b"\x00\xff{{{",
                        headers={"Content-Type": "application/json"})
        assert 400 <= r.status_code < 500

    def test_wrong_types_4xx(self, client):
        r = client.post("/search", json={"image_base64": 42, "top_k": "x"})
        assert 400 <= r.status_code < 500
