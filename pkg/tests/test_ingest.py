import json
import math
import struct
from fractions import Fraction

import numpy as np
import pytest

from oracles import sine_rms
from tracer.config import DetectorConfig
from tracer.fixtures import RunProfile, gen_clean_run, make_case
from tracer.ingest import (
    ArtefactDescriptor,
    ArtefactFormat,
    AudioBuffer,
    DeclaredClock,
    ParseError,
    UnsupportedFormatError,
    detect_audio_transients,
    load_case,
    parse_event_log,
    parse_frame_features,
    parse_manifest,
    parse_wav,
    write_event_log,
    write_frame_features,
    write_wav,
)
from tracer.model import EventKind


def desc(fmt=ArtefactFormat.EVENT_LOG_JSONL, offset=0, rate=1, stream=None):
    return ArtefactDescriptor(
        path="x", format=fmt,
        clock=DeclaredClock(offset_ms=Fraction(offset), rate=Fraction(rate)),
        stream=stream,
    )


# --- event logs -----------------------------------------------------------------

def test_parse_single_press():
    data = b'{"t_ms":0,"stream":"kbd","kind":"InputPress","payload":{"key":"Z"}}\n'
    events, warnings = parse_event_log(data, desc())
    assert warnings == []
    assert len(events) == 1
    ev = events[0]
    assert ev.kind is EventKind.INPUT_PRESS
    assert ev.t == 0
    assert ev.payload["key"] == "Z"
    assert ev.src_line == 1


def test_parse_empty_file():
    assert parse_event_log(b"", desc()) == ([], [])


def test_declared_clock_offset_applied():
    data = b'{"t_ms":100,"stream":"kbd","kind":"InputPress","payload":{"key":"Z"}}\n'
    events, _ = parse_event_log(data, desc(offset=50, rate=1))
    assert events[0].t == 150_000


def test_clock_transform_composition_property():
    # r*t + o within 1 us rounding, over assorted rationals
    clock = DeclaredClock(offset_ms=Fraction("12.5"), rate=Fraction("1.001"))
    for t_ms in [Fraction(0), Fraction(100), Fraction("33.333"), Fraction(123456, 7)]:
        expected = float(clock.rate * t_ms + clock.offset_ms) * 1000
        assert abs(clock.to_master_us(t_ms) - expected) <= 0.5001


def test_malformed_line_reports_line_number():
    data = b'{"t_ms":0,"stream":"a","kind":"InputPress","payload":{"key":"Z"}}\nnot json\n'
    with pytest.raises(ParseError, match=":2"):
        parse_event_log(data, desc())


def test_unknown_kind_rejected_with_name():
    data = b'{"t_ms":0,"stream":"a","kind":"Teleport","payload":{}}\n'
    with pytest.raises(ParseError, match="Teleport"):
        parse_event_log(data, desc())


def test_missing_payload_key_rejected():
    data = b'{"t_ms":0,"stream":"a","kind":"InputPress","payload":{}}\n'
    with pytest.raises(ParseError, match="key"):
        parse_event_log(data, desc())


def test_non_monotone_is_warning_not_error():
    data = (
        b'{"t_ms":10,"stream":"a","kind":"InputPress","payload":{"key":"Z"}}\n'
        b'{"t_ms":5,"stream":"a","kind":"InputPress","payload":{"key":"X"}}\n'
    )
    events, warnings = parse_event_log(data, desc())
    assert len(events) == 2
    assert len(warnings) == 1 and "non-monotone" in warnings[0]


def test_timer_seconds_parsed_exactly():
    data = (
        b'{"t_ms":0,"stream":"g","kind":"TimerSample","payload":{"seconds":12.35}}\n'
        b'{"t_ms":1,"stream":"g","kind":"TimerSample","payload":{"seconds":"741/60"}}\n'
    )
    events, _ = parse_event_log(data, desc())
    assert events[0].payload["seconds"] == Fraction(247, 20)
    assert events[1].payload["seconds"] == Fraction(741, 60)
    assert events[0].payload["seconds"] == events[1].payload["seconds"]


def test_event_log_round_trip():
    run, _ = gen_clean_run(3, RunProfile(duration_s=6.0))
    game = [e for e in run.events if e.stream == "game"]
    data = write_event_log(game)
    reparsed, warnings = parse_event_log(data, desc())
    assert warnings == []
    assert [(e.t, e.stream, e.kind, dict(e.payload)) for e in reparsed] == [
        (e.t, e.stream, e.kind, dict(e.payload)) for e in game
    ]
    # and a second round trip is byte-identical
    assert write_event_log(reparsed) == data


# --- frame features ---------------------------------------------------------------

def _frame_csv(rows):
    header = "frame_idx,pts_ms,phash," + ",".join(f"h{i}" for i in range(16))
    return ("\n".join([header] + rows) + "\n").encode()


def test_two_frames_span():
    hist = ",".join(["256"] * 16)
    data = _frame_csv([f"0,0.0,00000000deadbeef,{hist}", f"1,16.7,00000000deadbef0,{hist}"])
    frames, events, warnings = parse_frame_features(data, desc(ArtefactFormat.FRAME_FEATURES_CSV))
    assert len(frames) == 2 and len(events) == 2
    assert events[1].t - events[0].t == 16_700
    assert frames[0].phash == 0xDEADBEEF
    assert warnings == []


def test_equal_pts_is_hard_error():
    hist = ",".join(["1"] * 16)
    data = _frame_csv([f"0,0.0,0000000000000001,{hist}", f"1,0.0,0000000000000002,{hist}"])
    with pytest.raises(ParseError, match="non-increasing pts"):
        parse_frame_features(data, desc(ArtefactFormat.FRAME_FEATURES_CSV))


def test_negative_bin_rejected():
    hist = ",".join(["1"] * 15 + ["-1"])
    data = _frame_csv([f"0,0.0,0000000000000001,{hist}"])
    with pytest.raises(ParseError, match="negative"):
        parse_frame_features(data, desc(ArtefactFormat.FRAME_FEATURES_CSV))


def test_hist_sum_mismatch_is_warning():
    h1 = ",".join(["2"] * 16)
    h2 = ",".join(["3"] * 16)
    data = _frame_csv([f"0,0.0,0000000000000001,{h1}", f"1,5.0,0000000000000002,{h2}"])
    _, _, warnings = parse_frame_features(data, desc(ArtefactFormat.FRAME_FEATURES_CSV))
    assert len(warnings) == 1 and "histogram sum" in warnings[0]


def test_60fps_fixture_600_rows():
    profile = RunProfile(duration_s=10.0, fps=60)
    run, _ = gen_clean_run(11, profile)
    data = write_frame_features(run.frames)
    frames, events, _ = parse_frame_features(data, desc(ArtefactFormat.FRAME_FEATURES_CSV))
    assert len(frames) == 600
    span_s = (frames[-1].t - frames[0].t) / 1e6
    assert math.isclose(span_s, 599 / 60, abs_tol=1e-3)
    assert frames == run.frames


# --- WAV -----------------------------------------------------------------------------

def test_wav_silence():
    buf = AudioBuffer(sample_rate_hz=48000, samples=np.zeros(48000))
    parsed = parse_wav(write_wav(buf), desc(ArtefactFormat.AUDIO_WAV_PCM))
    assert parsed.sample_rate_hz == 48000
    assert parsed.channels == 1
    assert len(parsed.samples) == 48000
    assert np.all(parsed.samples == 0.0)


def test_wav_full_scale_square():
    square = np.where(np.arange(800) % 8 < 4, 1.0, -1.0)
    parsed = parse_wav(write_wav(AudioBuffer(8000, square)), desc(ArtefactFormat.AUDIO_WAV_PCM))
    assert np.max(parsed.samples) == pytest.approx(32767 / 32768)
    assert np.min(parsed.samples) == pytest.approx(-1.0)


def test_wav_sine_rms_matches_closed_form():
    sr, f, amp, dur = 44100, 440.0, 0.5, 0.5
    t = np.arange(round(sr * dur)) / sr
    buf = AudioBuffer(sr, amp * np.sin(2 * np.pi * f * t))
    parsed = parse_wav(write_wav(buf), desc(ArtefactFormat.AUDIO_WAV_PCM))
    assert len(parsed.samples) == 22050
    rms = float(np.sqrt(np.mean(parsed.samples**2)))
    assert abs(rms - sine_rms(amp)) < 1e-3


def test_wav_stereo_shape():
    stereo = np.stack([np.zeros(100), np.ones(100) * 0.25], axis=1)
    parsed = parse_wav(write_wav(AudioBuffer(8000, stereo)), desc(ArtefactFormat.AUDIO_WAV_PCM))
    assert parsed.channels == 2
    assert parsed.samples.shape == (100, 2)
    assert parsed.mono().shape == (100,)


def test_wav_rejects_non_pcm():
    data = bytearray(write_wav(AudioBuffer(8000, np.zeros(16))))
    struct.pack_into("<H", data, 20, 3)  # format tag -> IEEE float
    with pytest.raises(UnsupportedFormatError):
        parse_wav(bytes(data), desc(ArtefactFormat.AUDIO_WAV_PCM))


def test_wav_truncated_data_chunk_reports_offset():
    data = write_wav(AudioBuffer(8000, np.zeros(1000)))
    with pytest.raises(ParseError, match="byte offset 44"):
        parse_wav(data[:500], desc(ArtefactFormat.AUDIO_WAV_PCM))


# --- transients ---------------------------------------------------------------------

def test_transients_silence_empty(cfg):
    buf = AudioBuffer(8000, np.zeros(8000))
    assert detect_audio_transients(buf, cfg) == []


def test_single_click_found_within_tolerance(cfg):
    sr = 8000
    x = np.random.default_rng(0).normal(0, 0.005, sr)  # faint noise floor
    start = round(0.5 * sr)
    x[start : start + 16] += 0.6
    events = detect_audio_transients(AudioBuffer(sr, x), cfg)
    assert len(events) == 1
    assert abs(events[0].t - 500_000) <= 2_000
    assert events[0].payload["ratio"] > cfg.transient_ratio


def test_two_clicks_within_refractory_merge(cfg):
    sr = 8000
    x = np.zeros(sr)
    for t0 in (0.5, 0.51):  # 10 ms apart, inside the 30 ms refractory
        s = round(t0 * sr)
        x[s : s + 8] += 0.6
    events = detect_audio_transients(AudioBuffer(sr, x), cfg)
    assert len(events) == 1


# --- manifest / load_case --------------------------------------------------------------

def test_load_case_counts_match_artefacts(cfg, tmp_path):
    manifest_path, config_path, _ = make_case("clean", 17, str(tmp_path / "c"))
    from tracer.config import load_config

    bundle = load_case(manifest_path, load_config(config_path))
    # events = two JSONL logs + one FrameFeature per CSV row + derived transients
    jsonl_lines = 0
    for name in ("inputs.jsonl", "game.jsonl"):
        jsonl_lines += sum(1 for _ in open(tmp_path / "c" / name, "rb"))
    csv_rows = sum(1 for _ in open(tmp_path / "c" / "frames.csv", "rb")) - 1
    transients = sum(1 for e in bundle.events if e.kind is EventKind.AUDIO_TRANSIENT)
    assert len(bundle.events) == jsonl_lines + csv_rows + transients
    assert len(bundle.frames) == csv_rows
    assert set(bundle.audio) == {"audio"}


def test_missing_artefact_aborts(cfg, tmp_path):
    manifest = {
        "case_id": "x",
        "artefacts": [{"path": "absent.jsonl", "format": "EventLogJsonl"}],
    }
    mp = tmp_path / "manifest.json"
    mp.write_text(json.dumps(manifest))
    with pytest.raises(ParseError, match="missing artefact"):
        load_case(str(mp), cfg)


def test_manifest_requires_artefacts():
    with pytest.raises(ParseError, match="no artefacts"):
        parse_manifest(b'{"case_id": "x", "artefacts": []}')
