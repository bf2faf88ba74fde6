"""Answer-generation providers: remote chat-completion HTTP or a
deterministic stub.

The stub makes the whole pipeline runnable and testable offline: it
answers from the top retrieved evidence with fixed wording and always
cites marker [1] (and [2] when a second source exists).
"""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import requests

from . import rewrite
from .errors import ProviderUnavailable

log = logging.getLogger(__name__)

INSUFFICIENT_ANSWER = (
    "The available sources are insufficient to answer this question confidently."
)


@dataclass
class LlmResult:
    text: str
    reasoning_trace: str | None = None


class StubLlm:
    """Deterministic offline provider."""

    def __init__(self, include_trace: bool = False):
        self.include_trace = include_trace

    def generate(self, request) -> LlmResult:
        evidence = getattr(request, "evidence_items", [])
        if not evidence:
            return LlmResult(text=INSUFFICIENT_ANSWER)
        top = evidence[0]
        snippet = top.snippet.strip()
        if len(snippet) > 240:
            snippet = snippet[:240].rstrip() + "…"
        parts = [f"According to {top.display_title}, {snippet} [1]"]
        if len(evidence) > 1:
            parts.append(f"See also {evidence[1].display_title} [2].")
        trace = None
        if self.include_trace:
            trace = (
                f"Reviewed {len(evidence)} evidence item(s); answered from the "
                f"highest-weighted source ({top.display_title})."
            )
        return LlmResult(text=" ".join(parts), reasoning_trace=trace)

    def rewrite_question(self, question: str, history: list[tuple[str, str]],
                         entity: str) -> str:
        return rewrite.substitute_pronoun(question, entity)


class RemoteChatProvider:
    """OpenAI-style chat-completion endpoint, with retries and backoff."""

    def __init__(self, endpoint: str, model: str, api_key: str = "",
                 timeout_s: float = 60.0, retries: int = 3,
                 backoff_s: float = 0.25, post=None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self._post = post or requests.post

    @classmethod
    def from_env(cls) -> "RemoteChatProvider | None":
        endpoint = os.environ.get("LLM_ENDPOINT", "")
        if not endpoint:
            return None
        return cls(
            endpoint=endpoint,
            model=os.environ.get("LLM_MODEL", ""),
            api_key=os.environ.get("LLM_API_KEY", ""),
        )

    def _chat(self, messages: list[dict]) -> LlmResult:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._post(
                    self.endpoint,
                    json={"model": self.model, "messages": messages},
                    headers=headers,
                    timeout=self.timeout_s,
                )
                if resp.status_code != 200:
                    raise ProviderUnavailable(f"LLM endpoint returned HTTP {resp.status_code}")
                message = resp.json()["choices"][0]["message"]
                text = (message.get("content") or "").strip()
                if not text:
                    raise ProviderUnavailable("LLM returned an empty message")
                # surface a reasoning trace when the provider includes one
                trace = message.get("reasoning_content") or None
                return LlmResult(text=text, reasoning_trace=trace)
            except ProviderUnavailable as exc:
                last = exc
            except Exception as exc:
                last = exc
            if attempt < self.retries - 1:
                time.sleep(self.backoff_s * (2 ** attempt))
        raise ProviderUnavailable(f"LLM provider failed: {last}") from last

    def generate(self, request) -> LlmResult:
        user = f"Question: {request.question}\n\nEvidence:\n"
        user += request.evidence_block if request.evidence_block else "(no evidence retrieved)"
        return self._chat([
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": user},
        ])

    def rewrite_question(self, question: str, history: list[tuple[str, str]],
                         entity: str) -> str:
        lines = [f"{role}: {text}" for role, text in history]
        prompt = (
            "Conversation so far:\n" + "\n".join(lines) +
            f"\n\nRewrite this follow-up as a fully standalone question, "
            f"resolving pronouns from the conversation (the likely referent "
            f"is \"{entity}\"). Reply with only the rewritten question.\n\n"
            f"Follow-up: {question}"
        )
        result = self._chat([{"role": "user", "content": prompt}])
        return result.text.strip().strip('"')
