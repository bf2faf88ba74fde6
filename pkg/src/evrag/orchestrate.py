"""The agentic pipeline for one conversation turn.

reformulate -> route -> retrieve (dual source, concurrent) -> compose ->
generate -> attribute. Regulatory-flavored questions weight the local
corpus higher; mechanism/clinical questions weight literature higher.
A literature outage degrades a turn to local-only evidence instead of
failing it.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources

from . import rewrite
from .errors import IndexUnavailable, MarkerOutOfRange, ProviderUnavailable
from .pubmed import Article, LitQuery

log = logging.getLogger(__name__)

REFORMULATE_WINDOW = 6  # turns of context considered for rewriting
SNIPPET_LIMIT = 600

DEFAULT_REGULATORY_LEXICON = (
    "schedule", "scheduling", "legal", "law", "federal", "policy",
    "compliance", "controlled", "classification", "enforcement",
)
DEFAULT_SCIENTIFIC_LEXICON = (
    "mechanism", "receptor", "efficacy", "clinical", "treatment",
    "neurobiological", "pharmacolog", "outcome", "dose", "study",
)


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RetrievedEvidence:
    source_kind: str  # "local_regulatory" | "literature"
    ref: str          # chunk_id or pmid
    display_title: str
    score: float
    weight: float
    snippet: str
    article: Article | None = None

    def to_dict(self) -> dict:
        rec = {
            "source_kind": self.source_kind,
            "ref": self.ref,
            "display_title": self.display_title,
            "score": self.score,
            "weight": self.weight,
            "snippet": self.snippet,
        }
        if self.article is not None:
            rec["article"] = self.article.to_dict()
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "RetrievedEvidence":
        article = rec.get("article")
        return cls(
            source_kind=rec["source_kind"],
            ref=rec["ref"],
            display_title=rec["display_title"],
            score=rec["score"],
            weight=rec["weight"],
            snippet=rec["snippet"],
            article=Article.from_dict(article) if article else None,
        )


@dataclass
class ConversationTurn:
    turn_id: int
    role: str  # "user" | "assistant"
    text: str
    timestamp: str
    evidence: list[RetrievedEvidence] = field(default_factory=list)
    reformulated_query: str | None = None
    reasoning_trace: str | None = None
    degraded: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        rec = {
            "turn_id": self.turn_id,
            "role": self.role,
            "text": self.text,
            "timestamp": self.timestamp,
        }
        if self.evidence:
            rec["evidence"] = [e.to_dict() for e in self.evidence]
        if self.reformulated_query is not None:
            rec["reformulated_query"] = self.reformulated_query
        if self.reasoning_trace is not None:
            rec["reasoning_trace"] = self.reasoning_trace
        if self.degraded:
            rec["degraded"] = True
        if self.error is not None:
            rec["error"] = self.error
        return rec

    @classmethod
    def from_dict(cls, rec: dict) -> "ConversationTurn":
        return cls(
            turn_id=rec["turn_id"],
            role=rec["role"],
            text=rec["text"],
            timestamp=rec["timestamp"],
            evidence=[RetrievedEvidence.from_dict(e) for e in rec.get("evidence", [])],
            reformulated_query=rec.get("reformulated_query"),
            reasoning_trace=rec.get("reasoning_trace"),
            degraded=bool(rec.get("degraded", False)),
            error=rec.get("error"),
        )


@dataclass
class SourceWeights:
    w_local: float
    w_lit: float
    route: str  # "regulatory" | "scientific" | "mixed"


@dataclass
class RouterConfig:
    regulatory_lexicon: tuple[str, ...] = DEFAULT_REGULATORY_LEXICON
    scientific_lexicon: tuple[str, ...] = DEFAULT_SCIENTIFIC_LEXICON
    primary_weight: float = 0.7  # share given to the favored source


@dataclass
class GenerationRequest:
    system_prompt: str
    question: str
    evidence_block: str
    constraints: dict = field(default_factory=lambda: {
        "grounded": True,
        "cite": True,
        "admit_uncertainty": True,
        "educational_tone": True,
    })
    # raw items alongside the rendered block, for offline stub providers
    evidence_items: list[RetrievedEvidence] = field(default_factory=list)


@dataclass
class RetrievalResult:
    evidence: list[RetrievedEvidence]
    degraded: bool = False


@dataclass
class AttributionRecord:
    source_kind: str
    rank: int
    ref: str
    title: str
    display: str
    match_percent: float | None = None
    url: str | None = None
    authors_display: str | None = None
    year: int | None = None
    journal: str | None = None


def reformulate_query(
    history: list[ConversationTurn],
    question: str,
    llm,
    markers: tuple[str, ...] = rewrite.ANAPHORA_MARKERS,
    window: int = REFORMULATE_WINDOW,
) -> tuple[str, bool]:
    """Makes a follow-up question standalone; flags ambiguous referents.

    Returns (standalone_question, ambiguous). Questions with no history
    or no anaphoric markers pass through unchanged. If the most recent
    entity-bearing user turn introduced several equally recent referents,
    the question is left alone and flagged so the caller can ask for
    clarification rather than guess.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    if not history or not rewrite.has_anaphora(question, markers):
        return question, False

    recent = history[-window:]
    user_texts = [t.text for t in recent if t.role == "user"]
    candidates = rewrite.referent_candidates(user_texts)
    if not candidates:
        return question, False
    if len(candidates) >= 2:
        return question, True

    entity = candidates[0]
    pairs = [(t.role, t.text) for t in recent]
    try:
        rewritten = llm.rewrite_question(question, pairs, entity)
        if rewritten and rewritten.strip():
            return rewritten.strip(), False
        log.warning("provider returned empty rewrite; using local substitution")
    except ProviderUnavailable as exc:
        log.warning("rewrite provider unavailable (%s); using local substitution", exc)
    return rewrite.substitute_pronoun(question, entity), False


def route_sources(standalone_question: str,
                  config: RouterConfig | None = None) -> SourceWeights:
    """Keyword-class scoring over the two lexicons; tie means mixed."""
    if not standalone_question.strip():
        raise ValueError("question must be non-empty")
    config = config or RouterConfig()
    tokens = re.findall(r"[a-z]+", standalone_question.lower())
    reg_hits = sum(1 for t in tokens if any(t.startswith(s) for s in config.regulatory_lexicon))
    sci_hits = sum(1 for t in tokens if any(t.startswith(s) for s in config.scientific_lexicon))
    hi = config.primary_weight
    lo = round(1.0 - hi, 10)
    if reg_hits > sci_hits:
        return SourceWeights(w_local=hi, w_lit=lo, route="regulatory")
    if sci_hits > reg_hits:
        return SourceWeights(w_local=lo, w_lit=hi, route="scientific")
    return SourceWeights(w_local=0.5, w_lit=0.5, route="mixed")


def _payload_fields(payload: bytes) -> dict:
    try:
        return json.loads(payload.decode("utf-8"))
    except Exception:
        return {}


def _local_evidence(question: str, weights: SourceWeights, index, embed_one,
                    k_local: int) -> list[RetrievedEvidence]:
    vec = embed_one(question)
    hits = index.search(vec, k=k_local)
    out = []
    for hit in hits:
        meta = _payload_fields(hit.payload)
        out.append(RetrievedEvidence(
            source_kind="local_regulatory",
            ref=hit.item_id,
            display_title=meta.get("title") or meta.get("doc_id") or hit.item_id,
            score=hit.score,
            weight=weights.w_local * hit.score,
            snippet=meta.get("text", ""),
        ))
    return out


def _literature_evidence(question: str, weights: SourceWeights, litclient,
                         k_lit: int) -> list[RetrievedEvidence]:
    articles = litclient.lookup(LitQuery(term=question, max_results=k_lit))
    out = []
    for rank, article in enumerate(articles):
        rank_score = 1.0 - rank / k_lit
        out.append(RetrievedEvidence(
            source_kind="literature",
            ref=article.pmid,
            display_title=article.title,
            score=rank_score,
            weight=weights.w_lit * rank_score,
            snippet=article.abstract or article.title,
            article=article,
        ))
    return out


def retrieve_dual(standalone_question: str, weights: SourceWeights, index,
                  litclient, embed_one, k_local: int = 3,
                  k_lit: int = 3) -> RetrievalResult:
    """Runs local and literature retrieval concurrently and fuses by weight.

    Literature failures (or an unconfigured client) degrade to local-only
    with the degraded flag set; an unusable index is fatal.
    """
    if index is None:
        raise IndexUnavailable("no vector index configured")

    degraded = False
    lit_items: list[RetrievedEvidence] = []
    with ThreadPoolExecutor(max_workers=2) as pool:
        local_future = pool.submit(
            _local_evidence, standalone_question, weights, index, embed_one, k_local
        )
        lit_future = None
        if litclient is not None:
            lit_future = pool.submit(
                _literature_evidence, standalone_question, weights, litclient, k_lit
            )
        try:
            local_items = local_future.result()
        except Exception as exc:
            if lit_future is not None:
                lit_future.cancel()
            raise IndexUnavailable(f"local retrieval failed: {exc}") from exc
        if lit_future is None:
            degraded = True
        else:
            try:
                lit_items = lit_future.result()
            except Exception as exc:
                log.warning("literature retrieval degraded: %s", exc)
                degraded = True
                lit_items = []

    kind_order = {"local_regulatory": 0, "literature": 1}
    merged = sorted(
        local_items + lit_items,
        key=lambda e: (-e.weight, kind_order[e.source_kind], e.ref),
    )
    return RetrievalResult(evidence=merged, degraded=degraded)


def _load_prompt(name: str) -> str:
    return resources.files("evrag").joinpath(f"prompts/{name}").read_text(encoding="utf-8")


def compose_prompt(standalone_question: str,
                   evidence: list[RetrievedEvidence]) -> GenerationRequest:
    """Renders numbered evidence and the grounding/citation system prompt."""
    system_prompt = _load_prompt("answer_system_v1.txt")
    lines = []
    for n, item in enumerate(evidence, start=1):
        snippet = item.snippet
        if len(snippet) > SNIPPET_LIMIT:
            snippet = snippet[:SNIPPET_LIMIT] + "…"
        lines.append(f"[{n}] {item.display_title} ({item.source_kind}): {snippet}")
    if not evidence:
        system_prompt = system_prompt.rstrip() + "\n\n" + _load_prompt(
            "insufficient_evidence_v1.txt"
        )
    return GenerationRequest(
        system_prompt=system_prompt,
        question=standalone_question,
        evidence_block="\n".join(lines),
        evidence_items=list(evidence),
    )


_MARKER = re.compile(r"\[(\d+)\]")


def extract_markers(answer: str) -> list[int]:
    seen = []
    for m in _MARKER.findall(answer):
        value = int(m)
        if value not in seen:
            seen.append(value)
    return sorted(seen)


def generate_answer(request: GenerationRequest, llm) -> tuple[str, list[int], str | None]:
    """Returns (answer, cited markers present in the answer, optional trace)."""
    result = llm.generate(request)
    return result.text, extract_markers(result.text), result.reasoning_trace


def _authors_display(article: Article) -> str:
    if not article.authors:
        return "Unknown authors"
    return ", ".join(article.authors[:2]) + " et al."


def attribute_sources(evidence: list[RetrievedEvidence],
                      cited_markers: list[int]) -> list[AttributionRecord]:
    """Renders the per-source attribution panel, local group first.

    Local rows show the similarity as a percentage match; literature rows
    show authors/year/journal plus the canonical article link.
    """
    for marker in cited_markers:
        if marker < 1 or marker > len(evidence):
            raise MarkerOutOfRange(
                f"citation [{marker}] has no evidence item (have {len(evidence)})"
            )
    records: list[AttributionRecord] = []
    local = [e for e in evidence if e.source_kind == "local_regulatory"]
    literature = [e for e in evidence if e.source_kind == "literature"]
    for rank, item in enumerate(local, start=1):
        pct = round(item.score * 100, 1)
        records.append(AttributionRecord(
            source_kind="local_regulatory",
            rank=rank,
            ref=item.ref,
            title=item.display_title,
            display=f"#{rank} - {item.display_title} | {pct:.1f}% match",
            match_percent=pct,
        ))
    for rank, item in enumerate(literature, start=1):
        article = item.article
        authors = _authors_display(article) if article else "Unknown authors"
        year = article.year if article else 0
        journal = article.journal if article else ""
        records.append(AttributionRecord(
            source_kind="literature",
            rank=rank,
            ref=item.ref,
            title=item.display_title,
            display=f"#{rank} - {authors} ({year}) | {journal}",
            url=article.url if article else None,
            authors_display=authors,
            year=year,
            journal=journal,
        ))
    return records


@dataclass
class TurnDeps:
    """Everything run_turn needs; all members follow their module contracts."""
    index: object
    embed_one: object
    llm: object
    litclient: object | None = None
    router: RouterConfig = field(default_factory=RouterConfig)
    k_local: int = 3
    k_lit: int = 3
    persist: object | None = None  # callable(session, turn) -> None
    now: object = _now_iso


def _clarification_text(candidates: list[str]) -> str:
    listed = " or ".join(f'"{c}"' for c in candidates[:3])
    return (
        f"Your question could refer to more than one earlier topic ({listed}). "
        "Could you clarify which one you mean?"
    )


def run_turn(session, user_text: str, deps: TurnDeps) -> ConversationTurn:
    """Executes one full user->assistant exchange and appends both turns.

    The user turn is appended (and persisted, when a persist hook is
    configured) before any generation work starts, so a crash mid-turn
    never loses it. Pipeline failures are recorded as an assistant turn
    carrying an error tag, then re-raised for the caller to surface.
    """
    prior = list(session.turns)
    if prior and prior[-1].role == "user":
        # dangling user turn from an interrupted earlier run
        repair = ConversationTurn(
            turn_id=prior[-1].turn_id + 1,
            role="assistant",
            text="The previous response was interrupted before completion.",
            timestamp=deps.now(),
            error="interrupted",
        )
        session.append(repair)
        if deps.persist:
            deps.persist(session, repair)

    user_turn = ConversationTurn(
        turn_id=session.turns[-1].turn_id + 1 if session.turns else 0,
        role="user",
        text=user_text,
        timestamp=deps.now(),
    )
    session.append(user_turn)
    if deps.persist:
        deps.persist(session, user_turn)

    history = session.turns[:-1]

    def assistant(**kwargs) -> ConversationTurn:
        turn = ConversationTurn(
            turn_id=user_turn.turn_id + 1,
            role="assistant",
            timestamp=deps.now(),
            **kwargs,
        )
        session.append(turn)
        if deps.persist:
            deps.persist(session, turn)
        return turn

    try:
        standalone, ambiguous = reformulate_query(history, user_text, deps.llm)
        if ambiguous:
            recent_users = [t.text for t in history[-REFORMULATE_WINDOW:] if t.role == "user"]
            candidates = rewrite.referent_candidates(recent_users)
            return assistant(
                text=_clarification_text(candidates),
                reformulated_query=standalone,
            )
        weights = route_sources(standalone, deps.router)
        retrieval = retrieve_dual(
            standalone, weights, deps.index, deps.litclient, deps.embed_one,
            k_local=deps.k_local, k_lit=deps.k_lit,
        )
        request = compose_prompt(standalone, retrieval.evidence)
        answer, markers, trace = generate_answer(request, deps.llm)
        attribute_sources(retrieval.evidence, markers)  # validates markers
        return assistant(
            text=answer,
            evidence=retrieval.evidence,
            reformulated_query=standalone,
            reasoning_trace=trace,
            degraded=retrieval.degraded,
        )
    except (IndexUnavailable, ProviderUnavailable) as exc:
        assistant(
            text=f"This turn could not be completed: {exc}",
            error=type(exc).__name__,
        )
        raise
