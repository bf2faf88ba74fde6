"""Heuristic anaphora handling for history-aware query reformulation.

Finds the most recently mentioned salient entity in prior user turns and
substitutes it for a pronoun in the follow-up question. Entities are
maximal runs of non-stopword tokens; runs joined only by coordinators
("X and Y") form a group of equally recent referents, which is the
ambiguous case the caller must surface instead of guessing.
"""
from __future__ import annotations

import re

ANAPHORA_MARKERS = (
    "it", "its", "they", "them", "their", "there",
    "that", "this", "these", "those",
)

# function words + question scaffolding; anything left is entity material
STOPWORDS = frozenset("""
a an the and or of to in on at for from with without by as into over under
is are was were be been being am do does did done doing
can could should would may might must will shall have has had having
what which who whom whose when where why how
i you we he she me us him her my your our his hers
it its they them their theirs there that this these those
tell explain describe define compare list show give ask know want learn
about please more most some any also than then so such if not no nor
between versus vs within across during after before while
""".split())

_COORDINATORS = frozenset({"and", "or", ","})

_TOKEN = re.compile(r"[A-Za-z][A-Za-z'-]*|,")


def has_anaphora(question: str, markers: tuple[str, ...] = ANAPHORA_MARKERS) -> bool:
    found = {t.lower() for t in re.findall(r"[A-Za-z']+", question)}
    return any(m in found for m in markers)


def _close(groups: list[list[str]], run: list[str], join_previous: bool) -> None:
    phrase = " ".join(run)
    if join_previous and groups:
        groups[-1].append(phrase)
    else:
        groups.append([phrase])


def _coordinated_groups(text: str) -> list[list[str]]:
    """Entity runs in order; runs separated only by coordinators merge."""
    tokens = _TOKEN.findall(text)
    groups: list[list[str]] = []
    run: list[str] = []
    pending_join = False
    for token in tokens:
        lower = token.lower()
        if lower in _COORDINATORS:
            if run:
                _close(groups, run, pending_join)
                run = []
                pending_join = True
            continue
        if lower in STOPWORDS:
            if run:
                _close(groups, run, pending_join)
                run = []
            pending_join = False
            continue
        run.append(token)
    if run:
        _close(groups, run, pending_join)

    deduped = []
    for group in groups:
        seen: set[str] = set()
        members = []
        for member in group:
            if member.lower() not in seen:
                seen.add(member.lower())
                members.append(member)
        deduped.append(members)
    return deduped


def referent_candidates(turn_texts: list[str]) -> list[str]:
    """Candidate referents from the most recent turn that yields any.

    Turn texts are ordered oldest to newest; the newest entity-bearing
    turn is consulted. Within that turn, a trailing coordinated list
    ("X and Y") yields multiple equally recent candidates; otherwise the
    last entity alone wins.
    """
    for text in reversed(turn_texts):
        groups = _coordinated_groups(text)
        if groups:
            return groups[-1]
    return []


def substitute_pronoun(question: str, entity: str,
                       markers: tuple[str, ...] = ANAPHORA_MARKERS) -> str:
    """Replaces the first anaphoric marker with the entity.

    Possessives ("its", "their") become "<entity>'s".
    """
    pattern = re.compile(
        r"\b(" + "|".join(re.escape(m) for m in markers) + r")\b",
        re.IGNORECASE,
    )

    def repl(match: re.Match) -> str:
        word = match.group(1).lower()
        if word in ("its", "their"):
            return f"{entity}'s"
        return entity

    return pattern.sub(repl, question, count=1)
