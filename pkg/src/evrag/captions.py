"""WebVTT / SRT caption parsing and transcript track selection.

Both formats reduce to an ordered list of timed cues. Downstream we only
need the spoken text, so parsing strips cue identifiers, timestamps,
positioning settings and inline markup, and collapses roll-up repeats.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedCaptionFile, NoTracks


class TrackKind(str, Enum):
    MANUAL = "manual"
    AUTO_GENERATED = "auto_generated"


@dataclass
class Cue:
    start_ms: int
    end_ms: int
    text: str


@dataclass
class CaptionTrack:
    language: str  # BCP-47 tag
    kind: TrackKind
    cues: list[Cue] = field(default_factory=list)


_VTT_TIME = re.compile(
    r"(?:(\d{1,2}):)?(\d{2}):(\d{2})\.(\d{3})"
)
_SRT_TIME = re.compile(
    r"(\d{1,2}):(\d{2}):(\d{2}),(\d{3})"
)
_ARROW = re.compile(r"-->")
_INLINE_TAG = re.compile(r"<[^>]*>")


def _vtt_timestamp_ms(token: str) -> int:
    m = _VTT_TIME.fullmatch(token.strip())
    if not m:
        raise MalformedCaptionFile(f"bad VTT timestamp: {token!r}")
    hours = int(m.group(1) or 0)
    return ((hours * 60 + int(m.group(2))) * 60 + int(m.group(3))) * 1000 + int(m.group(4))


def _srt_timestamp_ms(token: str) -> int:
    m = _SRT_TIME.fullmatch(token.strip())
    if not m:
        raise MalformedCaptionFile(f"bad SRT timestamp: {token!r}")
    hours, minutes, seconds, millis = (int(g) for g in m.groups())
    return ((hours * 60 + minutes) * 60 + seconds) * 1000 + millis


def _clean_cue_text(lines: list[str]) -> str:
    text = " ".join(line.strip() for line in lines if line.strip())
    text = _INLINE_TAG.sub("", text)
    return re.sub(r"[ \t]+", " ", text).strip()


def parse_vtt(raw: str) -> list[Cue]:
    lines = raw.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if not lines or not lines[0].lstrip("﻿").startswith("WEBVTT"):
        raise MalformedCaptionFile("missing WEBVTT header")

    cues: list[Cue] = []
    i = 1
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        if not line or line.startswith(("NOTE", "STYLE", "REGION")):
            # skip blocks we do not need; NOTE/STYLE bodies run to a blank line
            if line.startswith(("NOTE", "STYLE", "REGION")):
                while i < n and lines[i].strip():
                    i += 1
            i += 1
            continue
        # optional cue identifier line directly above the timing line
        if "-->" not in line:
            i += 1
            if i >= n or "-->" not in lines[i]:
                raise MalformedCaptionFile(f"expected cue timing after {line!r}")
            line = lines[i].strip()
        start_tok, _, rest = line.partition("-->")
        end_tok = rest.strip().split(" ")[0]  # drop cue settings
        start_ms = _vtt_timestamp_ms(start_tok)
        end_ms = _vtt_timestamp_ms(end_tok)
        i += 1
        body: list[str] = []
        while i < n and lines[i].strip():
            body.append(lines[i])
            i += 1
        text = _clean_cue_text(body)
        if text:
            cues.append(Cue(start_ms, end_ms, text))
    return cues


def parse_srt(raw: str) -> list[Cue]:
    blocks = re.split(r"\n\s*\n", raw.replace("\r\n", "\n").replace("\r", "\n").strip())
    cues: list[Cue] = []
    for block in blocks:
        lines = [ln for ln in block.split("\n")]
        if not any(ln.strip() for ln in lines):
            continue
        # first line is a numeric counter, second the timing
        idx = 0
        if lines[idx].strip().isdigit():
            idx += 1
        if idx >= len(lines) or "-->" not in lines[idx]:
            raise MalformedCaptionFile(f"cue block without timing: {block[:40]!r}")
        start_tok, _, end_tok = lines[idx].partition("-->")
        start_ms = _srt_timestamp_ms(start_tok)
        end_ms = _srt_timestamp_ms(end_tok.strip())
        text = _clean_cue_text(lines[idx + 1:])
        if text:
            cues.append(Cue(start_ms, end_ms, text))
    return cues


def parse_captions(source: str | CaptionTrack, format: str = "vtt") -> str:
    """Flatten captions to plain text, one cue per line.

    Consecutive identical cue texts (roll-up duplication in auto
    transcripts) collapse to a single line.
    """
    if isinstance(source, CaptionTrack):
        cues = source.cues
    elif format == "vtt":
        cues = parse_vtt(source)
    elif format == "srt":
        cues = parse_srt(source)
    else:
        raise MalformedCaptionFile(f"unknown caption format: {format!r}")

    out: list[str] = []
    for cue in cues:
        text = _INLINE_TAG.sub("", cue.text).strip()
        if text and (not out or out[-1] != text):
            out.append(text)
    return "\n".join(out)


def select_transcript(tracks: list[CaptionTrack], preferred_language: str) -> CaptionTrack:
    """Pick the best track: language match first, then manual over auto.

    Within each preference tier the first occurrence wins.
    """
    if not tracks:
        raise NoTracks("no caption tracks to select from")
    preferred = preferred_language.lower()
    matching = [t for t in tracks if t.language.lower() == preferred]
    pool = matching if matching else tracks
    for track in pool:
        if track.kind == TrackKind.MANUAL:
            return track
    return pool[0]
