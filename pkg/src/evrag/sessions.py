"""Durable multi-turn sessions as JSON-lines files.

One file per session: the first line is the session header, every
following line is one conversation turn. Turns are appended (with
fsync) so a crash mid-turn can lose at most un-appended work; header
rewrites go through write-temp-then-rename. A garbage line marks the
session corrupt but earlier turns stay readable.
"""
from __future__ import annotations

import json
import logging
import os
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import NotFound
from .orchestrate import ConversationTurn

log = logging.getLogger(__name__)

TITLE_LIMIT = 60


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def new_session_id() -> str:
    return secrets.token_urlsafe(12)


@dataclass
class Session:
    session_id: str
    title: str
    created_at: str
    updated_at: str
    turns: list[ConversationTurn] = field(default_factory=list)
    corrupt: bool = False  # set when the stored file had unreadable lines

    def append(self, turn: ConversationTurn) -> None:
        if self.turns:
            last = self.turns[-1]
            if turn.turn_id <= last.turn_id:
                raise ValueError(
                    f"turn_id {turn.turn_id} not increasing (last {last.turn_id})"
                )
            if turn.role == last.role:
                raise ValueError(f"two consecutive {turn.role!r} turns")
        elif turn.role != "user":
            raise ValueError("sessions must start with a user turn")
        self.turns.append(turn)
        self.updated_at = turn.timestamp

    def header_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "title": self.title,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


@dataclass
class SessionSummary:
    session_id: str
    title: str
    created_at: str
    updated_at: str
    turn_count: int
    corrupt: bool = False

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "title": self.title,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "turn_count": self.turn_count,
            "corrupt": self.corrupt,
        }


def make_title(first_message: str) -> str:
    title = " ".join(first_message.split())
    return title[:TITLE_LIMIT]


class SessionStore:
    """Filesystem-backed store; one JSON-lines file per session."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    def _path(self, session_id: str) -> Path:
        safe = "".join(c for c in session_id if c.isalnum() or c in "-_")
        if not safe or safe != session_id:
            raise NotFound(f"invalid session id: {session_id!r}")
        return self.root / f"{safe}.jsonl"

    def create(self, first_message: str) -> Session:
        now = _now_iso()
        session = Session(
            session_id=new_session_id(),
            title=make_title(first_message),
            created_at=now,
            updated_at=now,
        )
        self._write_header(session)
        return session

    def _write_header(self, session: Session) -> None:
        path = self._path(session.session_id)
        tmp = path.with_suffix(".tmp")
        lines = [json.dumps(session.header_dict())]
        lines += [json.dumps(t.to_dict()) for t in session.turns]
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        tmp.replace(path)

    def append_turn(self, session: Session, turn: ConversationTurn) -> None:
        """Durably appends one turn line (fsync before returning)."""
        path = self._path(session.session_id)
        if not path.exists():
            self._write_header(session)
            return
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(turn.to_dict()) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def exists(self, session_id: str) -> bool:
        try:
            return self._path(session_id).exists()
        except NotFound:
            return False

    def load(self, session_id: str) -> Session:
        path = self._path(session_id)
        if not path.exists():
            raise NotFound(f"unknown session: {session_id}")
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise NotFound(f"empty session file: {session_id}")
        try:
            header = json.loads(lines[0])
            session = Session(
                session_id=header["session_id"],
                title=header.get("title", ""),
                created_at=header.get("created_at", ""),
                updated_at=header.get("updated_at", ""),
            )
        except (ValueError, KeyError) as exc:
            log.warning("session %s has an unreadable header: %s", session_id, exc)
            session = Session(session_id=session_id, title="",
                              created_at="", updated_at="", corrupt=True)
        for line in lines[1:]:
            if not line.strip():
                continue
            try:
                turn = ConversationTurn.from_dict(json.loads(line))
            except (ValueError, KeyError) as exc:
                log.warning("session %s: skipping corrupt line: %s", session_id, exc)
                session.corrupt = True
                continue
            session.turns.append(turn)
        if session.turns:
            session.updated_at = max(session.updated_at, session.turns[-1].timestamp)
        return session

    def list_sessions(self) -> list[SessionSummary]:
        summaries = []
        for path in self.root.glob("*.jsonl"):
            session_id = path.stem
            try:
                session = self.load(session_id)
            except NotFound:
                continue
            summaries.append(SessionSummary(
                session_id=session.session_id,
                title=session.title,
                created_at=session.created_at,
                updated_at=session.updated_at,
                turn_count=len(session.turns),
                corrupt=session.corrupt,
            ))
        summaries.sort(key=lambda s: s.updated_at, reverse=True)
        return summaries
