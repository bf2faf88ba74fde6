from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from evrag.chunker import chunk_text
from evrag.embedding import deterministic_embed
from evrag.hnsw import HnswIndex, HnswParams
from evrag.ingest import normalize
from evrag.pubmed import PubMedClient

FIXTURES = Path(__file__).parent / "fixtures"

ESEARCH_BODY = (FIXTURES / "esearch_cocaine.json").read_text(encoding="utf-8")
EFETCH_BODY = (FIXTURES / "efetch_cocaine.xml").read_text(encoding="utf-8")

# ten-document offline corpus used by service / CLI end-to-end tests
CORPUS_DOCS = {
    "cocaine-drug-facts": (
        "Cocaine is a powerfully addictive stimulant. Short-term use raises "
        "blood pressure and heart rate, and can trigger irregular heartbeat.\n\n"
        "Chronic cocaine use is linked to cardiovascular damage including "
        "ischemic heart conditions, cardiac arrest, and strokes. Medical "
        "attention is essential after chest pain."
    ),
    "methamphetamine-scheduling": (
        "Methamphetamine is listed under Schedule II of the federal controlled "
        "substances framework, reflecting accepted medical use with severe "
        "restrictions.\n\nUnlawful manufacture and distribution carry federal "
        "penalties; regulatory compliance requirements apply to prescribers."
    ),
    "fentanyl-overview": (
        "Fentanyl is a synthetic opioid roughly fifty times stronger than "
        "heroin. Tiny amounts can cause fatal respiratory depression.\n\n"
        "Illicitly manufactured fentanyl is frequently pressed into "
        "counterfeit pills, increasing accidental overdose risk."
    ),
    "opioid-receptor-mechanisms": (
        "Opioids act on mu-opioid receptors in the brain and spinal cord, "
        "blunting pain signaling and producing euphoria.\n\nRepeated exposure "
        "drives receptor downregulation and tolerance, a neurobiological "
        "mechanism behind escalating use."
    ),
    "prevention-programs": (
        "School and community prevention programs reduce early substance "
        "experimentation when they combine education with family engagement.\n\n"
        "Evidence supports skills-based curricula over fear-based messaging."
    ),
    "treatment-recovery-resources": (
        "Treatment for stimulant and opioid use disorders combines behavioral "
        "therapy with medication where available.\n\nRecovery resources include "
        "peer support groups, counseling services, and supervised withdrawal "
        "management programs."
    ),
    "naloxone-fact-sheet": (
        "Naloxone rapidly reverses opioid overdose by displacing opioids from "
        "their receptors.\n\nBystander administration is safe; emergency "
        "services should still be called after use."
    ),
    "marijuana-health-effects": (
        "Smoking marijuana affects short-term memory, coordination, and "
        "judgment.\n\nHeavy adolescent use is associated with persistent "
        "cognitive effects and respiratory irritation."
    ),
    "inhalants-warning": (
        "Common household products can be misused as inhalants, starving the "
        "brain of oxygen.\n\nSudden sniffing death can occur on first use; "
        "prevention hinges on awareness and safe storage."
    ),
    "policy-enforcement-brief": (
        "Federal policy coordinates scheduling decisions, enforcement "
        "priorities, and diversion control.\n\nClassification reviews weigh "
        "medical value against misuse potential under the law."
    ),
}


class CannedTransport:
    """Offline transport: routes by endpoint name, counts calls."""

    def __init__(self, esearch_body: str = ESEARCH_BODY,
                 efetch_body: str = EFETCH_BODY, status: int = 200):
        self.esearch_body = esearch_body
        self.efetch_body = efetch_body
        self.status = status
        self.calls: list[tuple[str, dict]] = []

    def get(self, url: str, params: dict):
        self.calls.append((url, dict(params)))
        if "esearch" in url:
            return self.status, self.esearch_body
        if "efetch" in url:
            return self.status, self.efetch_body
        return 404, "not found"


class FailingTransport:
    def __init__(self):
        self.calls = []

    def get(self, url: str, params: dict):
        self.calls.append((url, dict(params)))
        from evrag.errors import TransportError
        raise TransportError("simulated network outage")


class MockClock:
    """Deterministic clock; sleep() advances it."""

    def __init__(self):
        self.t = 0.0

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        self.t += max(seconds, 0.0)


def canned_pubmed_client(transport=None, **kwargs) -> PubMedClient:
    clock = MockClock()
    return PubMedClient(
        transport=transport or CannedTransport(),
        clock=clock.now,
        sleep=clock.sleep,
        **kwargs,
    )


def build_corpus_index(dim: int = 256, seed: int = 7) -> HnswIndex:
    """Chunks + embeds the offline corpus into a small index."""
    index = HnswIndex(HnswParams(dim=dim, rng_seed=seed))
    for doc_id, raw in CORPUS_DOCS.items():
        for chunk in chunk_text(normalize(raw), doc_id):
            payload = json.dumps({
                "doc_id": doc_id,
                "title": doc_id,
                "ordinal": chunk.ordinal,
                "char_span": list(chunk.char_span),
                "text": chunk.text,
            }).encode("utf-8")
            index.insert(chunk.chunk_id, deterministic_embed(chunk.text, dim), payload)
    return index


@pytest.fixture(scope="session")
def corpus_index() -> HnswIndex:
    return build_corpus_index()


@pytest.fixture(scope="session")
def hnsw_2000():
    """The acceptance-scale index: 2,000 seeded 1,024-d unit vectors."""
    rng = np.random.default_rng(42)
    vecs = rng.standard_normal((2000, 1024)).astype(np.float32)
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    index = HnswIndex(HnswParams(dim=1024, rng_seed=1234))
    for i, vec in enumerate(vecs):
        index.insert(f"v{i:05d}", vec, b"{}")
    return index, vecs
