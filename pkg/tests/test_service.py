from __future__ import annotations

import json
import re

import pytest
from fastapi.testclient import TestClient

from conftest import build_corpus_index, canned_pubmed_client
from evrag.embedding import deterministic_embed
from evrag.errors import ProviderUnavailable
from evrag.llm import StubLlm
from evrag.service import DISCLAIMER, ServiceConfig, create_app

MATCH_RE = re.compile(r"^#\d+ - .+ \| -?\d+\.\d% match$")


def _embed(text: str):
    return deterministic_embed(text, 256)


def _make_client(tmp_path, litclient="canned", llm=None, index="default") -> TestClient:
    config = ServiceConfig(
        sessions_dir=tmp_path / "sessions",
        index=build_corpus_index() if index == "default" else index,
        embed_one=_embed,
        llm=llm or StubLlm(),
        litclient=canned_pubmed_client() if litclient == "canned" else litclient,
    )
    return TestClient(create_app(config), raise_server_exceptions=False)


def test_health_includes_disclaimer(tmp_path):
    client = _make_client(tmp_path)
    body = client.get("/api/health").json()
    assert body["status"] == "ok"
    assert body["disclaimer"] == DISCLAIMER
    assert body["index_items"] > 0
    assert body["literature_enabled"] is True


def test_sources_panel_lists_both_source_families(tmp_path):
    client = _make_client(tmp_path)
    body = client.get("/api/sources").json()
    assert "local" in body["sources"]
    assert "literature" in body["sources"]


def test_first_chat_creates_session(tmp_path):
    client = _make_client(tmp_path)
    resp = client.post("/api/chat", json={"message": "What is naloxone?"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["session_id"]
    assert body["answer"]
    files = list((tmp_path / "sessions").glob("*.jsonl"))
    assert len(files) == 1
    listing = client.get("/api/sessions").json()["sessions"]
    assert listing[0]["session_id"] == body["session_id"]
    assert listing[0]["title"].startswith("What is naloxone?")


def test_cocaine_question_returns_dual_sources(tmp_path):
    client = _make_client(tmp_path)
    resp = client.post("/api/chat", json={
        "message": "What are the cardiovascular effects of cocaine?"})
    body = resp.json()
    assert resp.status_code == 200
    assert "[1]" in body["answer"]
    assert len(body["local_sources"]) == 3
    for rank, row in enumerate(body["local_sources"], start=1):
        assert row["rank"] == rank
        assert MATCH_RE.match(row["display"]), row["display"]
        assert row["chunk_id"]
        assert isinstance(row["match_percent"], float)
    assert len(body["literature_sources"]) >= 1
    lit = body["literature_sources"][0]
    assert lit["url"].startswith("https://pubmed.ncbi.nlm.nih.gov/")
    assert "et al." in lit["authors_display"]
    assert body["degraded"] is False
    assert body["reformulated_query"]


def test_multi_turn_uses_same_session(tmp_path):
    client = _make_client(tmp_path)
    first = client.post("/api/chat", json={"message": "What is fentanyl?"}).json()
    second = client.post("/api/chat", json={
        "session_id": first["session_id"],
        "message": "How does it compare to heroin?",
    }).json()
    assert second["session_id"] == first["session_id"]
    assert "fentanyl" in second["reformulated_query"].lower()
    stored = client.get(f"/api/sessions/{first['session_id']}").json()
    assert [t["role"] for t in stored["turns"]] == ["user", "assistant"] * 2
    assistant_turns = [t for t in stored["turns"] if t["role"] == "assistant"]
    assert assistant_turns[0]["local_sources"]


def test_degraded_without_literature_client(tmp_path):
    client = _make_client(tmp_path, litclient=None)
    body = client.post("/api/chat", json={
        "message": "What are the cardiovascular effects of cocaine?"}).json()
    assert body["degraded"] is True
    assert len(body["local_sources"]) == 3
    assert body["literature_sources"] == []


def test_degradation_preserves_local_set(tmp_path):
    with_lit = _make_client(tmp_path / "a").post(
        "/api/chat", json={"message": "What are the cardiovascular effects of cocaine?"}
    ).json()
    without_lit = _make_client(tmp_path / "b", litclient=None).post(
        "/api/chat", json={"message": "What are the cardiovascular effects of cocaine?"}
    ).json()
    keyed = lambda body: [(r["chunk_id"], r["match_percent"]) for r in body["local_sources"]]
    assert keyed(with_lit) == keyed(without_lit)


def test_empty_message_is_400(tmp_path):
    client = _make_client(tmp_path)
    resp = client.post("/api/chat", json={"message": "   "})
    assert resp.status_code == 400
    assert resp.json()["error"]["code"] == 400


def test_oversize_message_is_400(tmp_path):
    client = _make_client(tmp_path)
    resp = client.post("/api/chat", json={"message": "x" * 4001})
    assert resp.status_code == 400


def test_unknown_session_is_404(tmp_path):
    client = _make_client(tmp_path)
    resp = client.post("/api/chat", json={"session_id": "nope", "message": "hi"})
    assert resp.status_code == 404
    assert client.get("/api/sessions/nope").status_code == 404


def test_provider_outage_is_503_with_reason(tmp_path):
    class DeadLlm:
        def generate(self, request):
            raise ProviderUnavailable("llm down")

        def rewrite_question(self, question, history, entity):
            raise ProviderUnavailable("llm down")

    client = _make_client(tmp_path, llm=DeadLlm())
    resp = client.post("/api/chat", json={"message": "What is fentanyl?"})
    assert resp.status_code == 503
    assert resp.json()["error"]["reason"] == "provider_unavailable"


def test_index_outage_is_503(tmp_path):
    client = _make_client(tmp_path, index=None)
    resp = client.post("/api/chat", json={"message": "What is fentanyl?"})
    assert resp.status_code == 503
    assert resp.json()["error"]["reason"] == "index_unavailable"


def test_crash_after_user_turn_persists_user_turn(tmp_path):
    class CrashingLlm:
        def generate(self, request):
            raise RuntimeError("simulated hard crash")

        def rewrite_question(self, question, history, entity):
            return question

    client = _make_client(tmp_path, llm=CrashingLlm())
    resp = client.post("/api/chat", json={"message": "What is fentanyl?"})
    assert resp.status_code == 500
    files = list((tmp_path / "sessions").glob("*.jsonl"))
    assert len(files) == 1
    lines = files[0].read_text(encoding="utf-8").splitlines()
    turns = [json.loads(l) for l in lines[1:]]
    assert turns[0]["role"] == "user"
    assert turns[0]["text"] == "What is fentanyl?"


def test_error_bodies_are_schema_shaped(tmp_path):
    client = _make_client(tmp_path)
    for resp in (
        client.post("/api/chat", json={"message": ""}),
        client.get("/api/sessions/ghost"),
    ):
        body = resp.json()
        assert set(body) == {"error"}
        assert {"code", "message"} <= set(body["error"])
