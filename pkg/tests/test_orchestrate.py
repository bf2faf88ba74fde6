from __future__ import annotations

import pytest

from conftest import CannedTransport, FailingTransport, canned_pubmed_client
from evrag.embedding import deterministic_embed
from evrag.errors import IndexUnavailable, MarkerOutOfRange, ProviderUnavailable
from evrag.hnsw import HnswIndex, HnswParams
from evrag.llm import INSUFFICIENT_ANSWER, StubLlm
from evrag.orchestrate import (
    ConversationTurn,
    RetrievedEvidence,
    RouterConfig,
    TurnDeps,
    attribute_sources,
    compose_prompt,
    extract_markers,
    generate_answer,
    reformulate_query,
    retrieve_dual,
    route_sources,
    run_turn,
)
from evrag.pubmed import Article
from evrag.sessions import Session


def _embed(text: str):
    return deterministic_embed(text, 256)


def _turn(turn_id: int, role: str, text: str) -> ConversationTurn:
    return ConversationTurn(turn_id=turn_id, role=role, text=text,
                            timestamp="2025-01-01T00:00:00+00:00")


class UnavailableRewriter:
    def rewrite_question(self, question, history, entity):
        raise ProviderUnavailable("rewrite endpoint down")

    def generate(self, request):
        return StubLlm().generate(request)


# --- reformulate ---

def test_no_history_passes_through():
    standalone, ambiguous = reformulate_query([], "What is fentanyl?", StubLlm())
    assert standalone == "What is fentanyl?"
    assert ambiguous is False


def test_no_anaphora_passes_through():
    history = [_turn(0, "user", "What is fentanyl?"),
               _turn(1, "assistant", "Fentanyl is a synthetic opioid. [1]")]
    question = "What schedule is methamphetamine?"
    standalone, ambiguous = reformulate_query(history, question, StubLlm())
    assert standalone == question
    assert ambiguous is False


def test_stub_llm_substitutes_recent_entity():
    history = [_turn(0, "user", "What is fentanyl?"),
               _turn(1, "assistant", "An opioid. [1]")]
    standalone, ambiguous = reformulate_query(
        history, "How does it compare to heroin?", StubLlm())
    assert ambiguous is False
    assert "fentanyl" in standalone.lower()
    assert "it compare" not in standalone.lower()


def test_fallback_path_when_provider_unavailable():
    history = [_turn(0, "user", "What is fentanyl?"),
               _turn(1, "assistant", "An opioid. [1]")]
    standalone, ambiguous = reformulate_query(
        history, "How does it compare to heroin?", UnavailableRewriter())
    assert ambiguous is False
    assert "fentanyl" in standalone.lower()


def test_coordinated_entities_flag_ambiguity():
    history = [_turn(0, "user", "Tell me about prescription opioids and heroin."),
               _turn(1, "assistant", "Both carry overdose risk. [1]")]
    question = "How common is its use among adolescents?"
    standalone, ambiguous = reformulate_query(history, question, StubLlm())
    assert ambiguous is True
    assert standalone == question


def test_trailing_entity_wins_without_coordination():
    history = [_turn(0, "user", "What are the health effects of fentanyl?"),
               _turn(1, "assistant", "Severe. [1]")]
    standalone, ambiguous = reformulate_query(
        history, "How does it compare to heroin?", StubLlm())
    assert ambiguous is False
    assert "fentanyl" in standalone.lower()


def test_empty_question_rejected():
    with pytest.raises(ValueError):
        reformulate_query([], "  ", StubLlm())


# --- routing ---

def test_regulatory_route():
    weights = route_sources("What schedule is methamphetamine?")
    assert weights.route == "regulatory"
    assert weights.w_local == pytest.approx(0.7)
    assert weights.w_lit == pytest.approx(0.3)
    assert weights.w_local > weights.w_lit


def test_scientific_route():
    weights = route_sources("What receptor mechanisms underlie opioid efficacy?")
    assert weights.route == "scientific"
    assert weights.w_lit == pytest.approx(0.7)
    assert weights.w_lit > weights.w_local


def test_mixed_route_on_zero_hits():
    weights = route_sources("Tell me about caffeine")
    assert weights.route == "mixed"
    assert weights.w_local == weights.w_lit == pytest.approx(0.5)


def test_weights_always_sum_to_one():
    for q in ("schedule law policy", "receptor dose study", "hello there"):
        w = route_sources(q)
        assert w.w_local + w.w_lit == pytest.approx(1.0)


def test_route_invariant_under_non_lexicon_words():
    base = "What schedule is methamphetamine?"
    extended = base + " banana zebra umbrella kitten"
    assert route_sources(base).route == route_sources(extended).route


def test_stem_prefix_matching():
    assert route_sources("pharmacological outcomes of treatment").route == "scientific"
    assert route_sources("scheduling and enforcement rules").route == "regulatory"


def test_router_config_overridable():
    config = RouterConfig(primary_weight=0.9)
    weights = route_sources("federal law", config)
    assert weights.w_local == pytest.approx(0.9)
    assert weights.w_lit == pytest.approx(0.1)


# --- dual retrieval ---

def test_dual_retrieval_fuses_and_sorts_by_weight(corpus_index):
    weights = route_sources("Tell me about caffeine")  # mixed: 0.5 / 0.5
    result = retrieve_dual(
        "cardiovascular effects of cocaine", weights, corpus_index,
        canned_pubmed_client(), _embed,
    )
    assert result.degraded is False
    assert len(result.evidence) == 5  # 3 local + 2 canned articles
    weights_list = [e.weight for e in result.evidence]
    assert weights_list == sorted(weights_list, reverse=True)
    # hand-checked weight formulas
    lit = [e for e in result.evidence if e.source_kind == "literature"]
    assert lit[0].weight == pytest.approx(0.5 * 1.0)
    assert lit[1].weight == pytest.approx(0.5 * (1 - 1 / 3))
    local = [e for e in result.evidence if e.source_kind == "local_regulatory"]
    for e in local:
        assert e.weight == pytest.approx(0.5 * e.score)


def test_literature_outage_degrades_to_local_only(corpus_index):
    weights = route_sources("Tell me about caffeine")
    ok = retrieve_dual("cocaine heart", weights, corpus_index,
                       canned_pubmed_client(), _embed)
    down = retrieve_dual("cocaine heart", weights, corpus_index,
                         canned_pubmed_client(transport=FailingTransport()), _embed)
    assert down.degraded is True
    locals_ok = [(e.ref, e.score) for e in ok.evidence
                 if e.source_kind == "local_regulatory"]
    locals_down = [(e.ref, e.score) for e in down.evidence]
    assert len(locals_down) == 3
    assert all(e.source_kind == "local_regulatory" for e in down.evidence)
    assert locals_down == locals_ok  # outage never changes the local set


def test_missing_litclient_degrades(corpus_index):
    result = retrieve_dual("anything", route_sources("x y"), corpus_index, None, _embed)
    assert result.degraded is True
    assert all(e.source_kind == "local_regulatory" for e in result.evidence)


def test_empty_index_and_no_literature_yields_empty():
    empty = HnswIndex(HnswParams(dim=256, rng_seed=1))
    result = retrieve_dual("anything", route_sources("x"), empty, None, _embed)
    assert result.evidence == []
    assert result.degraded is True


def test_missing_index_is_fatal():
    with pytest.raises(IndexUnavailable):
        retrieve_dual("q", route_sources("x"), None, None, _embed)


def test_local_ranking_preserved_under_weighting(corpus_index):
    raw = corpus_index.search(_embed("cocaine blood pressure"), k=3)
    weights = route_sources("What schedule is this?")  # regulatory: w_local 0.7
    result = retrieve_dual("cocaine blood pressure", weights, corpus_index, None, _embed)
    local = [e for e in result.evidence if e.source_kind == "local_regulatory"]
    assert [e.ref for e in local] == [h.item_id for h in raw]


# --- prompt composition + generation ---

def _evidence(n: int, snippet_len: int = 50) -> list[RetrievedEvidence]:
    return [
        RetrievedEvidence(
            source_kind="local_regulatory",
            ref=f"doc:{i}",
            display_title=f"Document {i}",
            score=0.9 - i * 0.1,
            weight=0.45 - i * 0.05,
            snippet="s" * snippet_len,
        )
        for i in range(n)
    ]


def test_compose_numbers_evidence_in_order():
    req = compose_prompt("What is X?", _evidence(2))
    lines = req.evidence_block.splitlines()
    assert lines[0].startswith("[1] Document 0 (local_regulatory): ")
    assert lines[1].startswith("[2] Document 1 (local_regulatory): ")
    assert req.constraints == {
        "grounded": True, "cite": True,
        "admit_uncertainty": True, "educational_tone": True,
    }


def test_compose_empty_evidence_adds_insufficiency_instruction():
    req = compose_prompt("What is X?", [])
    assert "insufficient" in req.system_prompt.lower()
    assert req.evidence_block == ""


def test_compose_truncates_long_snippets_with_ellipsis():
    req = compose_prompt("q", _evidence(1, snippet_len=700))
    line = req.evidence_block.splitlines()[0]
    _, _, rendered = line.partition(": ")
    assert rendered == "s" * 600 + "…"


def test_system_prompt_states_the_four_constraints():
    req = compose_prompt("q", _evidence(1))
    prompt = req.system_prompt.lower()
    for needle in ("ground", "citation", "uncertainty", "educational tone"):
        assert needle in prompt


def test_stub_generation_cites_first_two_markers():
    answer, markers, trace = generate_answer(compose_prompt("q", _evidence(3)), StubLlm())
    assert "[1]" in answer
    assert "[2]" in answer
    assert markers == [1, 2]
    assert trace is None


def test_stub_generation_single_evidence_cites_one():
    answer, markers, _ = generate_answer(compose_prompt("q", _evidence(1)), StubLlm())
    assert markers == [1]


def test_stub_generation_insufficiency_sentence():
    answer, markers, _ = generate_answer(compose_prompt("q", []), StubLlm())
    assert answer == INSUFFICIENT_ANSWER
    assert markers == []


def test_extract_markers_dedupes_and_sorts():
    assert extract_markers("claim [2] more [1] again [2]") == [1, 2]
    assert extract_markers("no markers") == []


# --- attribution ---

def _lit_evidence(authors: list[str], year: int, journal: str) -> RetrievedEvidence:
    article = Article(pmid="99", title="T", authors=authors, journal=journal,
                      year=year, abstract="A")
    return RetrievedEvidence(source_kind="literature", ref="99", display_title="T",
                             score=1.0, weight=0.5, snippet="A", article=article)


def test_local_match_percent_formatting():
    ev = _evidence(1)
    ev[0].score = 0.585
    records = attribute_sources(ev, [1])
    assert records[0].display == "#1 - Document 0 | 58.5% match"
    assert records[0].match_percent == 58.5


def test_perfect_match_formats_as_100_point_0():
    ev = _evidence(1)
    ev[0].score = 1.0
    records = attribute_sources(ev, [])
    assert records[0].display.endswith("| 100.0% match")


def test_literature_attribution_format():
    records = attribute_sources([_lit_evidence(["A B", "C D"], 2017, "J")], [1])
    assert records[0].display == "#1 - A B, C D et al. (2017) | J"
    assert records[0].url == "https://pubmed.ncbi.nlm.nih.gov/99/"


def test_attribution_groups_local_before_literature():
    evidence = [_lit_evidence(["A B"], 2020, "J")] + _evidence(2)
    records = attribute_sources(evidence, [])
    assert [r.source_kind for r in records] == [
        "local_regulatory", "local_regulatory", "literature"]
    assert [r.rank for r in records] == [1, 2, 1]


def test_marker_out_of_range_rejected():
    with pytest.raises(MarkerOutOfRange):
        attribute_sources(_evidence(2), [3])
    with pytest.raises(MarkerOutOfRange):
        attribute_sources(_evidence(2), [0])


# --- run_turn ---

def _session() -> Session:
    return Session(session_id="s1", title="t", created_at="2025-01-01T00:00:00+00:00",
                   updated_at="2025-01-01T00:00:00+00:00")


def _deps(index, litclient=None, llm=None) -> TurnDeps:
    return TurnDeps(index=index, embed_one=_embed, llm=llm or StubLlm(),
                    litclient=litclient)


def test_scripted_fentanyl_dialogue(corpus_index):
    session = _session()
    deps = _deps(corpus_index, litclient=canned_pubmed_client())
    first = run_turn(session, "What is fentanyl?", deps)
    assert first.role == "assistant"
    assert first.reformulated_query == "What is fentanyl?"  # nothing to rewrite
    assert first.evidence
    second = run_turn(session, "How does it compare to heroin?", deps)
    assert "fentanyl" in second.reformulated_query.lower()
    assert [t.role for t in session.turns] == ["user", "assistant"] * 2
    assert [t.turn_id for t in session.turns] == [0, 1, 2, 3]


def test_ambiguous_pronoun_produces_clarification_turn(corpus_index):
    session = _session()
    deps = _deps(corpus_index)
    run_turn(session, "Tell me about prescription opioids and heroin.", deps)
    turn = run_turn(session, "How common is its use among adolescents?", deps)
    assert turn.evidence == []
    assert "clarify" in turn.text.lower()
    assert "prescription opioids" in turn.text
    assert "heroin" in turn.text


def test_provider_failure_recorded_and_raised(corpus_index):
    class DeadLlm:
        def generate(self, request):
            raise ProviderUnavailable("llm down")

        def rewrite_question(self, question, history, entity):
            raise ProviderUnavailable("llm down")

    session = _session()
    with pytest.raises(ProviderUnavailable):
        run_turn(session, "What is fentanyl?", _deps(corpus_index, llm=DeadLlm()))
    assert [t.role for t in session.turns] == ["user", "assistant"]
    assert session.turns[-1].error == "ProviderUnavailable"


def test_dangling_user_turn_repaired(corpus_index):
    session = _session()
    session.append(_turn(0, "user", "What is fentanyl?"))  # crash leftover
    turn = run_turn(session, "What is naloxone?", _deps(corpus_index))
    roles = [t.role for t in session.turns]
    assert roles == ["user", "assistant", "user", "assistant"]
    assert session.turns[1].error == "interrupted"
    assert turn.text


def test_degraded_flag_carried_on_turn(corpus_index):
    session = _session()
    turn = run_turn(session, "What is naloxone?", _deps(corpus_index, litclient=None))
    assert turn.degraded is True
