import json

import pytest
from fastapi.testclient import TestClient

from dbinsights.config import MethodConfig
from dbinsights.errors import InsufficientInsights
from dbinsights.evaluator import run_tournament
from dbinsights.pipeline import run_generate
from dbinsights.server import AnnotationSession, create_app

from mockkit import scripted_gateway


@pytest.fixture
def manifests(schools_db, tmp_path):
    paths = []
    for method in ("HLI", "Serial"):
        out = tmp_path / f"{method}.jsonl"
        run_generate(MethodConfig(name=method), schools_db, scripted_gateway(), out_path=out)
        paths.append(out)
    return paths


@pytest.fixture
def session_file(tmp_path):
    return tmp_path / "session.jsonl"


def _client(manifests, session_file, n_pairs=10, seed=0):
    app = create_app(manifests, session_file, n_pairs=n_pairs, seed=seed)
    return TestClient(app)


def test_fresh_session_state(manifests, session_file):
    client = _client(manifests, session_file)
    body = client.get("/api/session").json()
    assert body == {
        "total_pairs": 10,
        "answered": 0,
        "evaluator_id": "human",
        "next_index": 1,
        "complete": False,
    }


def test_pair_payload_is_blind(manifests, session_file):
    client = _client(manifests, session_file)
    for index in range(1, 11):
        payload = client.get(f"/api/pair/{index}").json()
        assert set(payload) == {"pair_index", "insight_a_text", "insight_b_text", "answered"}
        blob = json.dumps(payload).lower()
        for method in ("hli", "hli-ws", "hli-wh", "serial"):
            assert method not in blob
        assert payload["insight_a_text"]
        assert payload["insight_b_text"]


def test_submit_choice_appends_one_line(manifests, session_file):
    client = _client(manifests, session_file)
    response = client.post("/api/pair/1/choice", json={"winner": "A"})
    assert response.status_code == 200
    assert response.json()["winner"] == "A"
    lines = session_file.read_text().strip().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])
    assert record["pair_index"] == 1
    assert record["winner"] == "A"
    assert client.get("/api/session").json()["answered"] == 1
    assert client.get("/api/pair/1").json()["answered"] is True


def test_duplicate_submission_idempotent(manifests, session_file):
    client = _client(manifests, session_file)
    first = client.post("/api/pair/1/choice", json={"winner": "A"}).json()
    second = client.post("/api/pair/1/choice", json={"winner": "B"}).json()
    assert first["winner"] == "A"
    assert second["winner"] == "A"  # original answer stands
    assert len(session_file.read_text().strip().splitlines()) == 1


def test_malformed_submission_rejected(manifests, session_file):
    client = _client(manifests, session_file)
    assert client.post("/api/pair/1/choice", json={"winner": "left"}).status_code == 422
    assert client.post("/api/pair/1/choice", json={}).status_code == 422
    assert session_file.exists() is False


def test_unknown_pair_index(manifests, session_file):
    client = _client(manifests, session_file)
    assert client.get("/api/pair/99").status_code == 404
    response = client.post("/api/pair/99/choice", json={"winner": "A"})
    assert response.status_code == 404
    assert response.json()["detail"]["error"] == "unknown_pair"


def test_restart_after_crash_no_duplicates(manifests, session_file):
    client = _client(manifests, session_file)
    client.post("/api/pair/1/choice", json={"winner": "A"})
    client.post("/api/pair/2/choice", json={"winner": "B"})
    # New process over the same session file: the ack for pair 2 was lost,
    # the client replays it.
    revived = _client(manifests, session_file)
    assert revived.get("/api/session").json()["answered"] == 2
    revived.post("/api/pair/2/choice", json={"winner": "A"})
    lines = session_file.read_text().strip().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[1])["winner"] == "B"


def test_full_session_and_leaderboard(manifests, session_file):
    client = _client(manifests, session_file)
    total = client.get("/api/session").json()["total_pairs"]
    for index in range(1, total + 1):
        winner = "A" if index % 2 else "B"
        assert client.post(f"/api/pair/{index}/choice", json={"winner": winner}).status_code == 200
    state = client.get("/api/session").json()
    assert state["complete"] is True
    assert state["next_index"] is None

    lines = [json.loads(l) for l in session_file.read_text().strip().splitlines()]
    assert len(lines) == total

    session = AnnotationSession(manifests, session_file, n_pairs=total, seed=0)
    board = run_tournament(session.ordered_records(), keep_history=False)
    served = client.get("/api/leaderboard").json()
    assert served["games"] == total
    for method, rating in board.ratings.items():
        assert served["ratings"][method] == pytest.approx(rating, abs=1e-3)
    assert sum(served["ratings"].values()) == pytest.approx(1000.0 * len(served["ratings"]), abs=1e-2)


def test_session_requires_two_methods(schools_db, tmp_path):
    out = tmp_path / "only.jsonl"
    run_generate(MethodConfig(name="HLI"), schools_db, scripted_gateway(), out_path=out)
    with pytest.raises(InsufficientInsights):
        AnnotationSession([out], tmp_path / "s.jsonl", n_pairs=5, seed=0)


def test_static_assets_served(manifests, session_file, tmp_path):
    assets = tmp_path / "assets"
    assets.mkdir()
    (assets / "index.html").write_text("<!doctype html><title>annotate</title>")
    app = create_app(manifests, session_file, n_pairs=5, seed=0, assets_dir=assets)
    client = TestClient(app)
    response = client.get("/")
    assert response.status_code == 200
    assert "annotate" in response.text
    assert client.get("/api/session").status_code == 200
