"""Paragraph-bounded chunking for the embedding pipeline.

Normalized text is split on blank lines, then consecutive paragraphs are
greedily packed into chunks of at most ``target_chars`` characters. A
paragraph is never split: one longer than the target becomes its own
oversized chunk. Provenance (document id, ordinal, character span) rides
along so retrieval hits can be attributed back to the source.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

DEFAULT_TARGET_CHARS = 1000
JOINER = "\n\n"  # also the paragraph separator emitted by normalize()


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_span: tuple[int, int]

    @property
    def char_len(self) -> int:
        return self.char_span[1] - self.char_span[0]

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "char_span": list(self.char_span),
            "char_len": self.char_len,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "Chunk":
        return cls(
            chunk_id=rec["chunk_id"],
            doc_id=rec["doc_id"],
            ordinal=rec["ordinal"],
            text=rec["text"],
            char_span=tuple(rec["char_span"]),
        )


_BLANK_LINE = re.compile(r"\n{2,}")


def split_paragraphs(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Maximal runs of text separated by blank lines, with source spans.

    Empty paragraphs (leading/trailing separators) are dropped; spans are
    disjoint and ordered.
    """
    paragraphs = []
    pos = 0
    for match in _BLANK_LINE.finditer(text):
        piece = text[pos:match.start()]
        if piece:
            paragraphs.append((piece, (pos, match.start())))
        pos = match.end()
    tail = text[pos:]
    if tail:
        paragraphs.append((tail, (pos, len(text))))
    return paragraphs


def chunk_document(
    paragraphs: list[tuple[str, tuple[int, int]]],
    doc_id: str,
    target_chars: int = DEFAULT_TARGET_CHARS,
) -> list[Chunk]:
    """Greedy aggregation of consecutive paragraphs up to the target size.

    The two-character joiner between paragraphs counts toward the target.
    No lookahead, no overlap.
    """
    if target_chars < 1:
        raise ValueError("target_chars must be >= 1")
    chunks: list[Chunk] = []
    group: list[str] = []
    group_start = group_end = 0
    group_len = 0

    def flush():
        nonlocal group, group_len
        if group:
            ordinal = len(chunks)
            chunks.append(Chunk(
                chunk_id=f"{doc_id}:{ordinal}",
                doc_id=doc_id,
                ordinal=ordinal,
                text=JOINER.join(group),
                char_span=(group_start, group_end),
            ))
            group = []
            group_len = 0

    for para_text, (start, end) in paragraphs:
        added = len(para_text) if not group else group_len + len(JOINER) + len(para_text)
        if group and added > target_chars:
            flush()
            added = len(para_text)
        if not group:
            group_start = start
        group.append(para_text)
        group_end = end
        group_len = added
    flush()
    return chunks


def chunk_text(text: str, doc_id: str,
               target_chars: int = DEFAULT_TARGET_CHARS) -> list[Chunk]:
    return chunk_document(split_paragraphs(text), doc_id, target_chars)


def write_chunks(chunks: list[Chunk], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(json.dumps(chunk.to_dict(), ensure_ascii=False) + "\n")


def read_chunks(path: Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                chunks.append(Chunk.from_dict(json.loads(line)))
    return chunks
