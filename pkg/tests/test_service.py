import pytest
from builders import fcc, make_record, rocksalt, submission_fixture, zincblende
from fastapi.testclient import TestClient

from philately.calculator import LennardJones
from philately.cif import extract_structure, parse_document
from philately.config import Config, SamplingConfig
from philately.service import create_app
from philately.store import Store


def _upload(files):
    return [("files", (name, text.encode())) for name, text in files]


@pytest.fixture
def client():
    store = Store(None)
    with TestClient(create_app(store, LennardJones())) as c:
        yield c


def test_submission_flow(client):
    r = client.post("/submissions", data={"participant": "alice"}, files=_upload(submission_fixture()))
    assert r.status_code == 202
    created = r.json()
    assert created["files"] == 10
    # the test client runs background tasks before returning
    st = client.get(f"/submissions/{created['id']}").json()
    assert st["status"] == "evaluated"
    assert len(st["candidates"]) == 10
    assert st["score"]["total"] == pytest.approx(sum(c["score"] for c in st["candidates"]))
    board = client.get("/leaderboard").json()
    assert board[0]["participant"] == "alice"
    assert board[0]["total_score"] == pytest.approx(st["score"]["total"])


def test_deferred_processing_and_evaluate(client):
    files = _upload([("a.cif", open_cif(fcc("Ar", 5.26)))])
    created = client.post("/submissions", data={"participant": "bob", "process": "false"}, files=files).json()
    assert client.get(f"/submissions/{created['id']}").json()["status"] == "received"
    st = client.post(f"/submissions/{created['id']}/evaluate").json()
    assert st["status"] == "evaluated"
    (cand,) = st["candidates"]
    rec = client.get(f"/structures/{cand['record_id']}").json()
    assert rec["formula"] == "Ar" and rec["e_hull"] == pytest.approx(0.0, abs=1e-5)
    cif = client.get(f"/structures/{cand['record_id']}.cif")
    assert cif.status_code == 200 and cif.headers["content-type"].startswith("chemical/x-cif")
    (block,) = parse_document(cif.text).blocks
    assert extract_structure(block).composition().reduced_formula() == "Ar"


def open_cif(s):
    from philately.cif import emit_cif
    return emit_cif(s, "x")


def test_missing_things_are_404(client):
    assert client.get("/submissions/nope").status_code == 404
    assert client.post("/submissions/nope/evaluate").status_code == 404
    assert client.get("/structures/nope").status_code == 404
    assert client.get("/structures/nope.cif").status_code == 404


def test_bad_requests(client):
    assert client.post("/submissions", data={"participant": "a"}).status_code == 422
    assert client.get("/structures", params={"limit": -1}).status_code == 422
    assert client.get("/structures", params={"limit": 100000}).status_code == 422
    assert client.get("/stats", params={"bin_width": 0}).status_code == 422
    assert client.get("/structures", params={"elements": "Xx"}).status_code == 400


def test_query_and_stats():
    store = Store(None, refs={"Na": 0.0, "Cl": 0.0})
    store.insert_record(make_record("a", rocksalt(), -1.0, source="p1"))
    store.insert_record(make_record("b", zincblende(), -0.5, source="p2", e_hull=0.5))
    with TestClient(create_app(store, LennardJones())) as c:
        body = c.get("/structures", params={"elements": "Na,Cl"}).json()
        assert body["total"] == 2
        assert {r["id"] for r in body["records"]} == {"a", "b"}
        stable = c.get("/structures", params={"max_ehull": 0.0}).json()
        assert [r["id"] for r in stable["records"]] == ["a"]
        assert c.get("/structures", params={"source": "p2"}).json()["total"] == 1
        page = c.get("/structures", params={"limit": 1, "offset": 1}).json()
        assert page["total"] == 2 and len(page["records"]) == 1
        stats = c.get("/stats").json()
        assert stats["record_count"] == 2
        assert sum(b["count"] for b in stats["e_hull_histogram"]["bins"]) == 2


def test_gate_failure_is_reported():
    cfg = Config(sampling=SamplingConfig(fraction=1.0, min_pass_rate=0.9))
    with TestClient(create_app(Store(None), LennardJones(), cfg)) as c:
        files = _upload([("a.cif", open_cif(fcc("Ar", 5.26))), ("b.cif", "junk")])
        created = c.post("/submissions", data={"participant": "carol"}, files=files).json()
        st = c.get(f"/submissions/{created['id']}").json()
        assert st["status"] == "gate_failed"
        assert st["reports"][-1]["decision"] == "fail"
        assert st["score"] is None
        # nothing further to do; evaluate leaves it as is
        assert c.post(f"/submissions/{created['id']}/evaluate").json()["status"] == "gate_failed"


def test_dead_store_is_503(tmp_path):
    store = Store(tmp_path / "db", fsync=False)

    def boom(point):
        if point == "append:after":
            raise RuntimeError("disk gone")

    with TestClient(create_app(store, LennardJones()), raise_server_exceptions=False) as c:
        store.fault = boom
        files = _upload([("a.cif", open_cif(fcc("Ar", 5.26)))])
        assert c.post("/submissions", data={"participant": "a"}, files=files).status_code == 500
        store.fault = None
        assert c.post("/submissions", data={"participant": "a"}, files=files).status_code == 503
