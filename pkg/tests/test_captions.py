from __future__ import annotations

import re

import pytest

from evrag.captions import (
    CaptionTrack,
    Cue,
    TrackKind,
    parse_captions,
    parse_srt,
    parse_vtt,
    select_transcript,
)
from evrag.errors import MalformedCaptionFile, NoTracks

VTT_BASIC = """WEBVTT

00:00:01.000 --> 00:00:02.500
Hello

00:00:02.500 --> 00:00:04.000
world
"""

VTT_FANCY = """WEBVTT - with a comment

NOTE this note block
spans two lines

cue-1
00:01.000 --> 00:02.000 align:start position:10%
Hello <i>there</i>

00:02.000 --> 00:03.000
<b>General</b> guidance
"""

SRT_BASIC = """1
00:00:01,000 --> 00:00:02,000
A

2
00:00:02,000 --> 00:00:03,000
A

3
00:00:03,000 --> 00:00:04,000
B
"""


def test_vtt_two_cues_join_with_newline():
    assert parse_captions(VTT_BASIC, format="vtt") == "Hello\nworld"


def test_vtt_without_header_rejected():
    with pytest.raises(MalformedCaptionFile):
        parse_vtt("00:00:01.000 --> 00:00:02.000\nHello\n")


def test_vtt_cue_identifiers_settings_and_tags_stripped():
    assert parse_captions(VTT_FANCY, format="vtt") == "Hello there\nGeneral guidance"


def test_vtt_short_timestamp_form():
    cues = parse_vtt("WEBVTT\n\n00:01.000 --> 00:02.000\nhi\n")
    assert cues[0].start_ms == 1000
    assert cues[0].end_ms == 2000


def test_srt_rollup_duplicates_collapse():
    assert parse_captions(SRT_BASIC, format="srt") == "A\nB"


def test_srt_comma_milliseconds():
    cues = parse_srt("1\n01:02:03,456 --> 01:02:04,000\ntext\n")
    assert cues[0].start_ms == 3723456


def test_srt_bad_timing_rejected():
    with pytest.raises(MalformedCaptionFile):
        parse_srt("1\nnot a time --> also not\ntext\n")


def test_vtt_bad_timestamp_rejected():
    with pytest.raises(MalformedCaptionFile):
        parse_vtt("WEBVTT\n\n00:00:aa.000 --> 00:00:02.000\nHello\n")


def test_unknown_format_rejected():
    with pytest.raises(MalformedCaptionFile):
        parse_captions("whatever", format="ass")


def test_output_contains_no_timestamps_or_arrows():
    for raw, fmt in ((VTT_BASIC, "vtt"), (VTT_FANCY, "vtt"), (SRT_BASIC, "srt")):
        out = parse_captions(raw, fmt)
        assert "-->" not in out
        assert not re.search(r"\d+:\d{2}", out)


def test_parse_captions_accepts_track_objects():
    track = CaptionTrack("en", TrackKind.MANUAL, [
        Cue(0, 1000, "one"), Cue(1000, 2000, "one"), Cue(2000, 3000, "two"),
    ])
    assert parse_captions(track) == "one\ntwo"


# --- track selection ---

def _track(lang: str, kind: TrackKind) -> CaptionTrack:
    return CaptionTrack(language=lang, kind=kind, cues=[Cue(0, 1, "x")])


def test_manual_beats_auto_in_same_language():
    manual = _track("en", TrackKind.MANUAL)
    auto = _track("en", TrackKind.AUTO_GENERATED)
    assert select_transcript([auto, manual], "en") is manual


def test_only_auto_available():
    auto = _track("en", TrackKind.AUTO_GENERATED)
    assert select_transcript([auto], "en") is auto


def test_language_match_outranks_manual_kind():
    manual_es = _track("es", TrackKind.MANUAL)
    auto_en = _track("en", TrackKind.AUTO_GENERATED)
    assert select_transcript([manual_es, auto_en], "en") is auto_en


def test_no_language_match_falls_back_to_any():
    manual_es = _track("es", TrackKind.MANUAL)
    auto_fr = _track("fr", TrackKind.AUTO_GENERATED)
    assert select_transcript([auto_fr, manual_es], "en") is manual_es


def test_first_occurrence_breaks_ties():
    first = _track("en", TrackKind.MANUAL)
    second = _track("en", TrackKind.MANUAL)
    assert select_transcript([first, second], "en") is first


def test_empty_track_list_rejected():
    with pytest.raises(NoTracks):
        select_transcript([], "en")


def test_manual_always_selected_when_language_matches():
    # property: any ordering with a matching manual track returns a manual one
    import itertools
    tracks = [
        _track("en", TrackKind.AUTO_GENERATED),
        _track("en", TrackKind.MANUAL),
        _track("es", TrackKind.MANUAL),
    ]
    for perm in itertools.permutations(tracks):
        chosen = select_transcript(list(perm), "en")
        assert chosen.kind == TrackKind.MANUAL
        assert chosen.language == "en"
