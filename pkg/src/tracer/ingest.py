"""Evidence acquisition and normalisation: file parsers for case artefacts.

Supported artefact formats:

* Event log — JSONL, one object per line with ``t_ms`` (real), ``stream``,
  ``kind`` and a per-kind ``payload``.  Numeric payload values are parsed as
  exact rationals; ``TimerSample.seconds`` may also be a string like
  ``"12.35"`` or ``"741/60"`` when the producer needs exactness beyond
  decimals.
* Frame features — CSV with header ``frame_idx,pts_ms,phash,h0..h15``; a
  16-bin luma histogram plus a 64-bit perceptual hash per frame.
* Audio — RIFF WAVE, PCM 16-bit, mono or stereo, 8-192 kHz.
* Manifest — JSON inventory of the above with per-artefact declared clocks.

Parsers are pure: bytes in, value objects out.  Timestamps are converted to
the master clock (integer microseconds) via each artefact's declared clock.
"""
from __future__ import annotations

import enum
import json
import math
import os
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .config import DetectorConfig
from .model import (
    CaseBundle,
    EventKind,
    Micros,
    NormalizedEvent,
    PAYLOAD_SCHEMA,
    sort_events,
)


class ParseError(ValueError):
    """Hard artefact parsing failure; aborts ingest of the case."""


class UnsupportedFormatError(ParseError):
    pass


class ArtefactFormat(enum.Enum):
    EVENT_LOG_JSONL = "EventLogJsonl"
    FRAME_FEATURES_CSV = "FrameFeaturesCsv"
    AUDIO_WAV_PCM = "AudioWavPcm"
    MANIFEST = "Manifest"


@dataclass(frozen=True)
class DeclaredClock:
    """Affine map from an artefact's file clock (ms) onto the master clock."""

    offset_ms: Fraction = Fraction(0)
    rate: Fraction = Fraction(1)

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ParseError("declared clock rate must be positive")

    def to_master_us(self, t_file_ms: Fraction) -> Micros:
        return round((self.rate * t_file_ms + self.offset_ms) * 1000)


@dataclass(frozen=True)
class ArtefactDescriptor:
    path: str
    format: ArtefactFormat
    clock: DeclaredClock = DeclaredClock()
    stream: Optional[str] = None  # default stream for media artefacts


@dataclass(frozen=True)
class FrameFeature:
    """Per-frame summary emitted by an external frame-accurate extractor."""

    frame_idx: int
    pts_ms: float
    t: Micros
    luma_hist: tuple[int, ...]
    phash: int


@dataclass
class AudioBuffer:
    sample_rate_hz: int
    samples: np.ndarray  # shape (n,) mono or (n, 2); values in [-1, 1]
    origin: Micros = 0
    stream: str = "audio"

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else int(self.samples.shape[1])

    def mono(self) -> np.ndarray:
        if self.samples.ndim == 1:
            return self.samples
        return self.samples.mean(axis=1)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def sample_time_us(self, idx: int) -> Micros:
        return self.origin + round(idx * 1_000_000 / self.sample_rate_hz)


# --- event logs ---------------------------------------------------------------

def _coerce_payload(kind: EventKind, payload: dict[str, Any], where: str) -> dict[str, Any]:
    required = PAYLOAD_SCHEMA[kind]
    for key in required:
        if key not in payload:
            raise ParseError(f"{where}: payload for {kind.value} is missing key '{key}'")
    if kind is EventKind.TIMER_SAMPLE:
        secs = payload["seconds"]
        if isinstance(secs, str):
            payload["seconds"] = Fraction(secs)
        elif isinstance(secs, (int, Fraction)):
            payload["seconds"] = Fraction(secs)
        else:
            raise ParseError(f"{where}: TimerSample seconds must be a number or rational string")
    elif kind is EventKind.PROCEDURAL_OUTCOME:
        if not isinstance(payload["success"], bool):
            raise ParseError(f"{where}: ProceduralOutcome success must be a boolean")
    elif kind is EventKind.HAND_ACTIVITY:
        if payload["state"] not in ("present", "absent"):
            raise ParseError(f"{where}: HandActivity state must be 'present' or 'absent'")
    return payload


def parse_event_log(
    data: bytes, desc: ArtefactDescriptor, id_prefix: str = ""
) -> tuple[list[NormalizedEvent], list[str]]:
    """Parse a JSONL event log into master-clock events, in file order.

    Malformed lines are hard errors (with the line number); timestamps that go
    backwards within a stream only produce a warning — desynchronised logs are
    themselves evidence and must reach the detectors.
    """
    events: list[NormalizedEvent] = []
    warnings: list[str] = []
    last_t_ms: dict[str, Fraction] = {}
    text = data.decode("utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{desc.path}:{line_no}"
        try:
            doc = json.loads(line, parse_float=Fraction)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{where}: malformed JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise ParseError(f"{where}: event line must be a JSON object")
        try:
            t_ms = Fraction(doc["t_ms"])
            stream = str(doc["stream"])
            kind_name = doc["kind"]
            payload = dict(doc["payload"])
        except KeyError as exc:
            raise ParseError(f"{where}: missing field {exc.args[0]!r}") from exc
        try:
            kind = EventKind(kind_name)
        except ValueError:
            raise ParseError(f"{where}: unknown event kind '{kind_name}'") from None
        payload = _coerce_payload(kind, payload, where)
        prev = last_t_ms.get(stream)
        if prev is not None and t_ms < prev:
            warnings.append(f"{where}: non-monotone t_ms in stream '{stream}' ({float(t_ms)} < {float(prev)})")
        last_t_ms[stream] = t_ms
        events.append(
            NormalizedEvent(
                id=f"{id_prefix}{stream}:{line_no}",
                t=desc.clock.to_master_us(t_ms),
                stream=stream,
                kind=kind,
                payload=payload,
                src_line=line_no,
            )
        )
    return events, warnings


def _fraction_decimal(f: Fraction) -> Optional[str]:
    """Exact decimal rendering when the denominator is of the form 2^a*5^b."""
    den = f.denominator
    d = den
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return None
    shift = max(twos, fives)
    scaled = f.numerator * 10**shift // den
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled)).rjust(shift + 1, "0")
    if shift == 0:
        return f"{sign}{digits}"
    return f"{sign}{digits[:-shift]}.{digits[-shift:]}"


def _encode_payload_value(v: Any) -> Any:
    if isinstance(v, Fraction):
        dec = _fraction_decimal(v)
        if dec is not None and Fraction(dec) == v:
            # emit as a bare number token for plain-JSON consumers
            return _RawNumber(dec)
        return f"{v.numerator}/{v.denominator}"
    return v


class _RawNumber:
    """Marker for exact decimal number tokens in hand-assembled JSON lines."""

    def __init__(self, text: str) -> None:
        self.text = text


def _dump_json_line(doc: Mapping[str, Any]) -> str:
    parts = []
    for key, value in doc.items():
        if isinstance(value, _RawNumber):
            rendered = value.text
        elif isinstance(value, Mapping):
            inner = ",".join(
                f"{json.dumps(k)}:{v.text if isinstance(v, _RawNumber) else json.dumps(v)}"
                for k, v in value.items()
            )
            rendered = "{" + inner + "}"
        else:
            rendered = json.dumps(value)
        parts.append(f"{json.dumps(key)}:{rendered}")
    return "{" + ",".join(parts) + "}"


def write_event_log(events: Sequence[NormalizedEvent]) -> bytes:
    """Serialize events as a JSONL log in master-clock milliseconds.

    Round-trip contract: parsing the output with an identity declared clock
    yields an event list equal to the input (ids aside).
    """
    lines = []
    for ev in events:
        payload = {k: _encode_payload_value(v) for k, v in ev.payload.items()}
        doc = {
            "t_ms": _RawNumber(_fraction_decimal(Fraction(ev.t, 1000)) or "0"),
            "stream": ev.stream,
            "kind": ev.kind.value,
            "payload": payload,
        }
        lines.append(_dump_json_line(doc))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


# --- frame features -----------------------------------------------------------

_FRAME_HEADER = ["frame_idx", "pts_ms", "phash"] + [f"h{i}" for i in range(16)]


def parse_frame_features(
    data: bytes, desc: ArtefactDescriptor, id_prefix: str = ""
) -> tuple[list[FrameFeature], list[NormalizedEvent], list[str]]:
    """Parse the frame-feature CSV; presentation times must strictly increase."""
    text = data.decode("utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return [], [], []
    header = [c.strip() for c in lines[0].split(",")]
    if header != _FRAME_HEADER:
        raise ParseError(f"{desc.path}: bad frame-feature header: {','.join(header)}")
    stream = desc.stream or "video"
    frames: list[FrameFeature] = []
    events: list[NormalizedEvent] = []
    warnings: list[str] = []
    prev_pts: Optional[Fraction] = None
    hist_sum: Optional[int] = None
    for line_no, line in enumerate(lines[1:], start=2):
        cols = line.split(",")
        where = f"{desc.path}:{line_no}"
        if len(cols) != len(_FRAME_HEADER):
            raise ParseError(f"{where}: expected {len(_FRAME_HEADER)} columns, got {len(cols)}")
        try:
            frame_idx = int(cols[0])
            pts = Fraction(cols[1])
            phash = int(cols[2], 16)
            hist = tuple(int(c) for c in cols[3:])
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from exc
        if any(h < 0 for h in hist):
            raise ParseError(f"{where}: negative histogram bin")
        if prev_pts is not None and pts <= prev_pts:
            raise ParseError(f"{where}: non-increasing pts")
        prev_pts = pts
        total = sum(hist)
        if hist_sum is None:
            hist_sum = total
        elif total != hist_sum:
            warnings.append(f"{where}: histogram sum {total} differs from first row ({hist_sum})")
        t = desc.clock.to_master_us(pts)
        frames.append(FrameFeature(frame_idx=frame_idx, pts_ms=float(pts), t=t, luma_hist=hist, phash=phash))
        events.append(
            NormalizedEvent(
                id=f"{id_prefix}{stream}:{line_no}",
                t=t,
                stream=stream,
                kind=EventKind.FRAME_FEATURE,
                payload={"frame_idx": frame_idx, "phash": f"{phash:016x}"},
                src_line=line_no,
            )
        )
    return frames, events, warnings


def write_frame_features(frames: Sequence[FrameFeature]) -> bytes:
    rows = [",".join(_FRAME_HEADER)]
    for fr in frames:
        pts = _fraction_decimal(Fraction(fr.t, 1000)) or repr(fr.pts_ms)
        rows.append(
            f"{fr.frame_idx},{pts},{fr.phash:016x}," + ",".join(str(h) for h in fr.luma_hist)
        )
    return ("\n".join(rows) + "\n").encode("utf-8")


# --- WAV audio ----------------------------------------------------------------

def parse_wav(data: bytes, desc: ArtefactDescriptor) -> AudioBuffer:
    """Parse RIFF/WAVE PCM16 into normalized float samples in [-1, 1]."""
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ParseError(f"{desc.path}: not a RIFF/WAVE file")
    pos = 12
    fmt: Optional[tuple[int, int, int, int]] = None  # (format, channels, rate, block_align)
    samples: Optional[np.ndarray] = None
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if chunk_id == b"fmt ":
            if size < 16:
                raise ParseError(f"{desc.path}: fmt chunk too small")
            audio_format, channels, rate, _byte_rate, block_align, bits = struct.unpack_from(
                "<HHIIHH", data, body
            )
            if audio_format != 1 or bits != 16:
                raise UnsupportedFormatError(
                    f"{desc.path}: unsupported format (need PCM 16-bit, got format={audio_format}, bits={bits})"
                )
            if channels not in (1, 2):
                raise UnsupportedFormatError(f"{desc.path}: unsupported channel count {channels}")
            if not (8000 <= rate <= 192000):
                raise UnsupportedFormatError(f"{desc.path}: sample rate {rate} outside 8-192 kHz")
            fmt = (audio_format, channels, rate, block_align)
        elif chunk_id == b"data":
            if fmt is None:
                raise ParseError(f"{desc.path}: data chunk precedes fmt chunk")
            available = len(data) - body
            if size > available:
                raise ParseError(
                    f"{desc.path}: truncated data chunk at byte offset {body}: "
                    f"declared {size} bytes, found {available}"
                )
            _, channels, rate, block_align = fmt
            n_frames = size // (2 * channels)
            raw = np.frombuffer(data, dtype="<i2", count=n_frames * channels, offset=body)
            arr = raw.astype(np.float64) / 32768.0
            samples = arr if channels == 1 else arr.reshape(-1, channels)
        pos = body + size + (size & 1)  # chunks are word-aligned
    if fmt is None or samples is None:
        raise ParseError(f"{desc.path}: missing fmt or data chunk")
    origin = desc.clock.to_master_us(Fraction(0))
    return AudioBuffer(
        sample_rate_hz=fmt[2], samples=samples, origin=origin, stream=desc.stream or "audio"
    )


def write_wav(buf: AudioBuffer) -> bytes:
    samples = buf.samples if buf.samples.ndim > 1 else buf.samples[:, None]
    ints = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    channels = ints.shape[1]
    rate = buf.sample_rate_hz
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, channels, rate, rate * 2 * channels, 2 * channels, 16)
    return header + fmt + b"data" + struct.pack("<I", len(payload)) + payload


# --- audio transients ----------------------------------------------------------

def detect_audio_transients(
    buf: AudioBuffer, cfg: DetectorConfig, id_prefix: str = ""
) -> list[NormalizedEvent]:
    """Locate short high-energy onsets (keystroke clicks, pad taps).

    A sample qualifies when the 2 ms trailing energy exceeds the preceding
    50 ms energy by ``cfg.transient_ratio``; one event is emitted per local
    peak, with a 30 ms refractory period.
    """
    x = buf.mono()
    n = len(x)
    sr = buf.sample_rate_hz
    w_short = max(1, round(0.002 * sr))
    w_long = max(1, round(0.050 * sr))
    if n < w_short + w_long + 1:
        return []
    energy = np.concatenate(([0.0], np.cumsum(x * x)))
    idx = np.arange(w_short + w_long, n + 1)  # windows end at sample idx-1
    short = (energy[idx] - energy[idx - w_short]) / w_short
    long = (energy[idx - w_short] - energy[idx - w_short - w_long]) / w_long
    ratio = short / np.maximum(long, 1e-12)
    peak_ok = np.abs(x[idx - 1]) >= cfg.transient_min_peak
    mask = (ratio > cfg.transient_ratio) & peak_ok
    if not mask.any():
        return []
    refractory_us = round(cfg.transient_refractory_ms * 1000)
    events: list[NormalizedEvent] = []
    positions = np.flatnonzero(mask)
    # group contiguous qualifying samples, keep the best-ratio sample per group
    splits = np.flatnonzero(np.diff(positions) > 1) + 1
    last_t: Optional[int] = None
    for group in np.split(positions, splits):
        best = group[np.argmax(ratio[group])]
        sample_idx = int(idx[best] - 1)
        t = buf.sample_time_us(sample_idx)
        if last_t is not None and t - last_t < refractory_us:
            continue
        last_t = t
        lo = max(0, sample_idx - w_short)
        amplitude = float(np.max(np.abs(x[lo : sample_idx + 1])))
        events.append(
            NormalizedEvent(
                id=f"{id_prefix}{buf.stream}:t{len(events)}",
                t=t,
                stream=buf.stream,
                kind=EventKind.AUDIO_TRANSIENT,
                payload={"amplitude": amplitude, "ratio": float(ratio[best])},
            )
        )
    return events


# --- manifest and case loading --------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    case_id: str
    descriptors: tuple[ArtefactDescriptor, ...]
    fixture: Optional[Mapping[str, Any]] = None
    raw: Mapping[str, Any] = field(default_factory=dict)


def parse_manifest(data: bytes, base_dir: str = ".") -> Manifest:
    try:
        doc = json.loads(data.decode("utf-8"), parse_float=str)
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest: malformed JSON ({exc.msg})") from exc
    if "case_id" not in doc or "artefacts" not in doc:
        raise ParseError("manifest: missing case_id or artefacts")
    if not doc["artefacts"]:
        raise ParseError("manifest: lists no artefacts")
    descriptors = []
    for entry in doc["artefacts"]:
        clock_doc = entry.get("declared_clock", {})
        clock = DeclaredClock(
            offset_ms=Fraction(str(clock_doc.get("offset_ms", 0))),
            rate=Fraction(str(clock_doc.get("rate", 1))),
        )
        try:
            fmt = ArtefactFormat(entry["format"])
        except ValueError:
            raise ParseError(f"manifest: unknown artefact format '{entry.get('format')}'") from None
        descriptors.append(
            ArtefactDescriptor(
                path=os.path.join(base_dir, entry["path"]),
                format=fmt,
                clock=clock,
                stream=entry.get("stream"),
            )
        )
    return Manifest(
        case_id=str(doc["case_id"]),
        descriptors=tuple(descriptors),
        fixture=doc.get("fixture"),
        raw=doc,
    )


def load_case(manifest_path: str, cfg: DetectorConfig) -> CaseBundle:
    """Parse every artefact in the manifest and assemble one case bundle.

    Derived events (audio transients) are computed here so that the bundle is
    self-contained for the detector stage.  Any hard parser error aborts with
    the artefact path and cause.
    """
    with open(manifest_path, "rb") as fh:
        manifest = parse_manifest(fh.read(), base_dir=os.path.dirname(manifest_path) or ".")
    events: list[NormalizedEvent] = []
    frames: list[FrameFeature] = []
    audio: dict[str, AudioBuffer] = {}
    warnings: list[str] = []
    for i, desc in enumerate(manifest.descriptors):
        prefix = f"a{i}:"
        if not os.path.exists(desc.path):
            raise ParseError(f"missing artefact: {desc.path}")
        with open(desc.path, "rb") as fh:
            data = fh.read()
        if desc.format is ArtefactFormat.EVENT_LOG_JSONL:
            evs, warns = parse_event_log(data, desc, id_prefix=prefix)
            events.extend(evs)
            warnings.extend(warns)
        elif desc.format is ArtefactFormat.FRAME_FEATURES_CSV:
            frs, evs, warns = parse_frame_features(data, desc, id_prefix=prefix)
            frames.extend(frs)
            events.extend(evs)
            warnings.extend(warns)
        elif desc.format is ArtefactFormat.AUDIO_WAV_PCM:
            buf = parse_wav(data, desc)
            if buf.stream in audio:
                raise ParseError(f"{desc.path}: duplicate audio stream '{buf.stream}'")
            audio[buf.stream] = buf
            events.extend(detect_audio_transients(buf, cfg, id_prefix=prefix))
        else:
            raise ParseError(f"{desc.path}: nested manifests are not supported")
    frames.sort(key=lambda fr: fr.t)
    return CaseBundle(
        case_id=manifest.case_id,
        manifest=manifest.raw,
        events=sort_events(events),
        frames=frames,
        audio=audio,
        warnings=warnings,
    )
