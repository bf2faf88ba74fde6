"""HTTP API binding the engine together for web and programmatic clients.

POST /api/chat drives the turn pipeline against a persistent session;
GET /api/sessions[/{id}] expose stored conversations; /api/sources and
/api/health feed the UI's sidebar and footer. Error bodies are always
{"error": {"code", "message", ...}}.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import orchestrate
from .errors import IndexUnavailable, NotFound, ProviderUnavailable
from .orchestrate import ConversationTurn, TurnDeps, attribute_sources, extract_markers
from .sessions import Session, SessionStore

log = logging.getLogger(__name__)

MESSAGE_LIMIT = 4000

DISCLAIMER = (
    "This assistant is for educational purposes only and does not substitute "
    "for professional medical advice."
)

DEFAULT_SOURCES = {
    "local": {
        "label": "Curated regulatory corpus",
        "items": ["Fact sheets & policy documents", "Educational podcasts"],
    },
    "literature": {
        "label": "Scientific research",
        "items": ["PubMed research articles"],
    },
}


@dataclass
class ServiceConfig:
    sessions_dir: Path
    index: object | None = None
    embed_one: object | None = None
    llm: object | None = None
    litclient: object | None = None
    router: orchestrate.RouterConfig = field(default_factory=orchestrate.RouterConfig)
    k_local: int = 3
    k_lit: int = 3
    sources: dict = field(default_factory=lambda: DEFAULT_SOURCES)
    static_dir: Path | None = None


def _error_body(code: int, message: str, reason: str | None = None) -> dict:
    payload = {"code": code, "message": message}
    if reason:
        payload["reason"] = reason
    return {"error": payload}


def _turn_sources(turn: ConversationTurn) -> tuple[list[dict], list[dict]]:
    records = attribute_sources(turn.evidence, extract_markers(turn.text))
    local, literature = [], []
    for rec in records:
        if rec.source_kind == "local_regulatory":
            local.append({
                "rank": rec.rank,
                "title": rec.title,
                "match_percent": rec.match_percent,
                "chunk_id": rec.ref,
                "display": rec.display,
            })
        else:
            literature.append({
                "rank": rec.rank,
                "authors_display": rec.authors_display,
                "year": rec.year,
                "journal": rec.journal,
                "title": rec.title,
                "url": rec.url,
                "display": rec.display,
            })
    return local, literature


def _turn_dict(turn: ConversationTurn) -> dict:
    rec = {
        "turn_id": turn.turn_id,
        "role": turn.role,
        "text": turn.text,
        "timestamp": turn.timestamp,
    }
    if turn.role == "assistant":
        local, literature = _turn_sources(turn)
        rec["local_sources"] = local
        rec["literature_sources"] = literature
        rec["degraded"] = turn.degraded
        if turn.reformulated_query is not None:
            rec["reformulated_query"] = turn.reformulated_query
        if turn.reasoning_trace is not None:
            rec["reasoning_trace"] = turn.reasoning_trace
        if turn.error is not None:
            rec["error"] = turn.error
    return rec


def _chat_response(session: Session, turn: ConversationTurn) -> dict:
    local, literature = _turn_sources(turn)
    return {
        "session_id": session.session_id,
        "answer": turn.text,
        "local_sources": local,
        "literature_sources": literature,
        "reformulated_query": turn.reformulated_query or "",
        "degraded": turn.degraded,
        "reasoning_trace": turn.reasoning_trace,
    }


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="evrag", docs_url=None, redoc_url=None)
    store = SessionStore(config.sessions_dir)
    app.state.store = store
    app.state.config = config

    def deps(store_hook=True) -> TurnDeps:
        return TurnDeps(
            index=config.index,
            embed_one=config.embed_one,
            llm=config.llm,
            litclient=config.litclient,
            router=config.router,
            k_local=config.k_local,
            k_lit=config.k_lit,
            persist=store.append_turn if store_hook else None,
        )

    @app.exception_handler(Exception)
    async def on_internal_error(request: Request, exc: Exception):
        log.exception("internal error on %s", request.url.path)
        return JSONResponse(status_code=500,
                            content=_error_body(500, "internal error"))

    @app.get("/api/health")
    async def health():
        return {
            "status": "ok",
            "disclaimer": DISCLAIMER,
            "index_items": len(config.index) if config.index is not None else 0,
            "literature_enabled": config.litclient is not None,
        }

    @app.get("/api/sources")
    async def sources():
        return {"sources": config.sources, "disclaimer": DISCLAIMER}

    @app.get("/api/sessions")
    async def list_sessions():
        return {"sessions": [s.to_dict() for s in store.list_sessions()]}

    @app.get("/api/sessions/{session_id}")
    async def get_session(session_id: str):
        try:
            session = store.load(session_id)
        except NotFound:
            return JSONResponse(status_code=404,
                                content=_error_body(404, "unknown session"))
        return {
            "session_id": session.session_id,
            "title": session.title,
            "created_at": session.created_at,
            "updated_at": session.updated_at,
            "corrupt": session.corrupt,
            "turns": [_turn_dict(t) for t in session.turns],
        }

    @app.post("/api/chat")
    async def chat(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse(status_code=400,
                                content=_error_body(400, "body must be JSON"))
        message = (body.get("message") or "").strip()
        if not message:
            return JSONResponse(status_code=400,
                                content=_error_body(400, "message must be non-empty"))
        if len(message) > MESSAGE_LIMIT:
            return JSONResponse(
                status_code=400,
                content=_error_body(400, f"message exceeds {MESSAGE_LIMIT} characters"),
            )

        session_id = body.get("session_id")
        if session_id:
            if not store.exists(session_id):
                return JSONResponse(status_code=404,
                                    content=_error_body(404, "unknown session"))
            session = store.load(session_id)
        else:
            session = store.create(message)

        lock = store.lock_for(session.session_id)
        with lock:
            try:
                turn = orchestrate.run_turn(session, message, deps())
            except IndexUnavailable as exc:
                return JSONResponse(
                    status_code=503,
                    content=_error_body(503, str(exc), reason="index_unavailable"),
                )
            except ProviderUnavailable as exc:
                return JSONResponse(
                    status_code=503,
                    content=_error_body(503, str(exc), reason="provider_unavailable"),
                )
        return _chat_response(session, turn)

    if config.static_dir and Path(config.static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(config.static_dir), html=True),
                  name="ui")

    return app


def config_from_env() -> ServiceConfig:
    """Assembles a live config from the process environment."""
    from .embedding import EmbedderConfig, make_embedder
    from .hnsw import HnswIndex
    from .llm import RemoteChatProvider, StubLlm
    from .pubmed import DEFAULT_BASE_URL, PubMedClient

    sessions_dir = Path(os.environ.get("SESSIONS_DIR", "./sessions"))
    index = None
    index_path = os.environ.get("INDEX_PATH", "")
    if index_path and Path(index_path).exists():
        index = HnswIndex.load(Path(index_path))
    dim = index.dim if index is not None else EmbedderConfig().dim
    embed_one = make_embedder(EmbedderConfig.from_env(dim=dim))
    llm = RemoteChatProvider.from_env() or StubLlm()
    litclient = None
    if os.environ.get("LIT_DISABLED", "") != "1":
        litclient = PubMedClient(
            api_key=os.environ.get("NCBI_API_KEY", ""),
            base_url=os.environ.get("NCBI_BASE_URL", "") or DEFAULT_BASE_URL,
        )
    static_dir = os.environ.get("UI_DIR", "")
    return ServiceConfig(
        sessions_dir=sessions_dir,
        index=index,
        embed_one=embed_one,
        llm=llm,
        litclient=litclient,
        static_dir=Path(static_dir) if static_dir else None,
    )
