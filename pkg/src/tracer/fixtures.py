"""Synthetic case generation: clean runs and labelled manipulation classes.

`gen_clean_run` produces a plausible submission (humanlike input jitter,
tick-exact timers, phase-stable periodic events, fair trials, continuous
audio with keypress clicks, smoothly varying frame features).  The tamper
operations recreate documented manipulation *classes* - splicing, re-timed
footage, biased trial outcomes, staged hand evidence - and label the result
with ground truth so detector hit rates can be measured mechanically.

Everything is a pure function of (seed, parameters); identical inputs yield
identical bundles.
"""
from __future__ import annotations

import copy
import json
import math
import os
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .config import (
    BernoulliModel,
    DetectorConfig,
    LcgModel,
    PeriodicEventSpec,
    StateRule,
    save_config,
)
from .ingest import (
    AudioBuffer,
    FrameFeature,
    write_event_log,
    write_frame_features,
    write_wav,
)
from .model import EventKind, Micros, NormalizedEvent, sort_events

WALL_STREAMS = frozenset({"input", "handcam"})  # wall-clock evidence
MEDIA_STREAMS = frozenset({"game"})  # rides the submitted footage's clock


@dataclass(frozen=True)
class RunProfile:
    duration_s: float = 48.0
    fps: int = 30
    sample_rate: int = 8000
    input_rate_hz: float = 4.0
    jitter_ms: float = 12.0
    tick_rate: Fraction = Fraction(60)
    timer_interval_ticks: int = 15  # 0.25 s at 60 Hz; keeps decimals exact
    blink_period_ms: float = 2000.0
    blink_tolerance_ms: float = 50.0
    prng_trials: int = 200
    prng_p: Fraction = Fraction(1, 10)
    lcg_trials: int = 48
    stimulus_interval_s: float = 6.0
    hum_hz: float = 50.0
    hum_amp: float = 0.06
    room_tone: float = 0.01
    click_amp: float = 0.5
    pixel_count: int = 4096


FIXTURE_LCG = LcgModel(
    name="fixture-lcg",
    trial="lcg_drop",
    modulus=(1 << 31) - 1,
    multiplier=1103515245,
    increment=12345,
    out_shift=16,
    out_mod=1024,
    out_threshold=512,
    seed_space=(0, 1 << 20),
)


@dataclass
class GroundTruth:
    kind: str  # clean | splice | speedup | prng_bias | embodiment
    seed: int
    params: dict[str, Any] = field(default_factory=dict)
    expected_rules: tuple[str, ...] = ()
    interval_s: Optional[tuple[float, float]] = None


@dataclass
class SyntheticRun:
    case_id: str
    profile: RunProfile
    events: list[NormalizedEvent]
    audio: np.ndarray  # mono float64
    frames: list[FrameFeature]
    lcg_seed: int


def run_equal(a: SyntheticRun, b: SyntheticRun) -> bool:
    return (
        a.case_id == b.case_id
        and a.profile == b.profile
        and a.events == b.events
        and np.array_equal(a.audio, b.audio)
        and a.frames == b.frames
        and a.lcg_seed == b.lcg_seed
    )


def fixture_config(profile: RunProfile) -> DetectorConfig:
    """The per-game config a moderation body would ship for this fixture title."""
    return DetectorConfig(
        tick_rate_hz=profile.tick_rate,
        hum_hz=profile.hum_hz,
        response_keys=("J",),
        periodic_events=(
            PeriodicEventSpec(
                name="blink",
                period_ms=profile.blink_period_ms,
                tolerance_ms=profile.blink_tolerance_ms,
            ),
        ),
        prng_models=(
            BernoulliModel(name="barter", trial="barter", p=profile.prng_p),
            FIXTURE_LCG,
        ),
        state_rules=(
            StateRule(name="kill_count", monotone=True, max_delta_per_s=10.0),
            StateRule(name="quest_B", requires=("quest_A", "complete")),
            StateRule(name="quest_A"),
        ),
    )


# --- clean-run generation -----------------------------------------------------------

def _ev(t_us: Micros, stream: str, kind: EventKind, payload: dict, n: int) -> NormalizedEvent:
    return NormalizedEvent(id=f"g{n:05d}", t=t_us, stream=stream, kind=kind, payload=payload)


def gen_clean_run(seed: int, profile: RunProfile = RunProfile(), case_id: Optional[str] = None) -> tuple[SyntheticRun, GroundTruth]:
    rng = random.Random(seed)
    nprng = np.random.default_rng(seed)
    dur = profile.duration_s
    case_id = case_id or f"clean-{seed:04d}"
    events: list[NormalizedEvent] = []
    n = 0

    def emit(t_us: Micros, stream: str, kind: EventKind, payload: dict) -> None:
        nonlocal n
        events.append(_ev(t_us, stream, kind, payload, n))
        n += 1

    # hand on camera for the whole session
    emit(0, "handcam", EventKind.HAND_ACTIVITY, {"state": "present"})

    # free-play typing with humanlike jitter (truncated normal, floor 2 ms)
    keys = "ZXCV"
    press_times_s: list[float] = []
    base = 1.0 / profile.input_rate_hz
    t = 1.0
    ki = 0
    while t < dur - 1.0:
        key = keys[ki % len(keys)]
        ki += 1
        t_us = round(t * 1e6)
        press_times_s.append(t)
        emit(t_us, "input", EventKind.INPUT_PRESS, {"key": key})
        hold = rng.uniform(0.040, 0.120)
        emit(round((t + hold) * 1e6), "input", EventKind.INPUT_RELEASE, {"key": key})
        t += max(0.002, base + rng.gauss(0.0, profile.jitter_ms / 1000.0))

    # stimuli answered at comfortably human latencies
    s = 2.0
    si = 0
    while s < dur - 1.5:
        emit(round(s * 1e6), "game", EventKind.STIMULUS_SHOWN, {"stimulus_id": f"s{si}"})
        latency = rng.uniform(0.170, 0.450)
        rt = s + latency
        press_times_s.append(rt)
        emit(round(rt * 1e6), "input", EventKind.INPUT_PRESS, {"key": "J"})
        emit(round((rt + 0.080) * 1e6), "input", EventKind.INPUT_RELEASE, {"key": "J"})
        si += 1
        s += profile.stimulus_interval_s

    # tick-exact timer samples
    f = profile.tick_rate
    k = 0
    while True:
        v = Fraction(k * profile.timer_interval_ticks) / f
        if v > dur:
            break
        emit(round(v * 1_000_000), "game", EventKind.TIMER_SAMPLE, {"seconds": v})
        k += 1

    # phase-stable periodic blink
    period_s = profile.blink_period_ms / 1000.0
    bt = 0.5
    bi = 0
    while bt < dur:
        jitter = max(-0.015, min(0.015, rng.gauss(0.0, 0.005)))
        emit(round((bt + jitter) * 1e6), "game", EventKind.GAME_STATE_CHANGE,
             {"name": "blink", "old": bi % 2, "new": (bi + 1) % 2})
        bi += 1
        bt += period_s

    # monotone kill counter, slow quest progression
    kills = 0
    kt = rng.uniform(3.0, 8.0)
    while kt < dur:
        emit(round(kt * 1e6), "game", EventKind.GAME_STATE_CHANGE,
             {"name": "kill_count", "old": kills, "new": kills + 1})
        kills += 1
        kt += rng.uniform(3.0, 8.0)
    emit(round(0.4 * dur * 1e6), "game", EventKind.GAME_STATE_CHANGE,
         {"name": "quest_A", "old": "locked", "new": "complete"})
    emit(round(0.6 * dur * 1e6), "game", EventKind.GAME_STATE_CHANGE,
         {"name": "quest_B", "old": "locked", "new": "active"})

    # fair Bernoulli trials
    trial_times = sorted(rng.uniform(1.0, dur - 1.0) for _ in range(profile.prng_trials))
    p = float(profile.prng_p)
    for tt in trial_times:
        emit(round(tt * 1e6), "game", EventKind.PROCEDURAL_OUTCOME,
             {"trial": "barter", "success": rng.random() < p})

    # seeded LCG trials (drop table); the generating seed lives in ground truth
    lcg_seed = rng.randrange(FIXTURE_LCG.seed_space[0], FIXTURE_LCG.seed_space[1])
    state = lcg_seed
    lcg_times = sorted(rng.uniform(1.0, dur - 1.0) for _ in range(profile.lcg_trials))
    for tt in lcg_times:
        state = (FIXTURE_LCG.multiplier * state + FIXTURE_LCG.increment) % FIXTURE_LCG.modulus
        success = ((state >> FIXTURE_LCG.out_shift) % FIXTURE_LCG.out_mod) < FIXTURE_LCG.out_threshold
        emit(round(tt * 1e6), "game", EventKind.PROCEDURAL_OUTCOME,
             {"trial": "lcg_drop", "success": success})

    audio = _gen_audio(profile, press_times_s, nprng)
    frames = _gen_frames(profile, rng, nprng)

    run = SyntheticRun(
        case_id=case_id,
        profile=profile,
        events=sort_events(events),
        audio=audio,
        frames=frames,
        lcg_seed=lcg_seed,
    )
    gt = GroundTruth(kind="clean", seed=seed, params={"lcg_seed": lcg_seed}, expected_rules=())
    return run, gt


def _gen_audio(profile: RunProfile, press_times_s: Sequence[float], nprng: np.random.Generator) -> np.ndarray:
    sr = profile.sample_rate
    n = round(profile.duration_s * sr)
    t = np.arange(n) / sr
    phase = nprng.uniform(0, 2 * math.pi)
    audio = profile.hum_amp * np.sin(2 * math.pi * profile.hum_hz * t + phase)
    # lowpassed room tone
    noise = nprng.normal(0.0, profile.room_tone, n)
    audio += lfilter([0.3], [1.0, -0.7], noise)
    # keypress clicks: 3 ms decaying tone with a 1 ms attack, 2 ms after each press
    click_len = max(8, round(0.003 * sr))
    tau = np.arange(click_len) / sr
    envelope = np.exp(-tau / 0.001) * np.minimum(1.0, tau / 0.001)
    carrier = np.sin(2 * math.pi * 1800.0 * tau)
    for pt in press_times_s:
        start = round((pt + 0.002) * sr)
        if 0 <= start and start + click_len <= n:
            amp = profile.click_amp * nprng.uniform(0.8, 1.2)
            audio[start : start + click_len] += amp * envelope * carrier
    return np.clip(audio, -0.95, 0.95)


def _gen_frames(profile: RunProfile, rng: random.Random, nprng: np.random.Generator) -> list[FrameFeature]:
    n_frames = round(profile.duration_s * profile.fps)
    frames: list[FrameFeature] = []
    bins = np.arange(16, dtype=np.float64)
    phi = rng.uniform(0, 2 * math.pi)
    for k in range(n_frames):
        ts = k / profile.fps
        centre = 7.5 + 4.0 * math.sin(2 * math.pi * ts / 35.0 + phi) + nprng.normal(0.0, 0.06)
        weights = np.exp(-0.5 * ((bins - centre) / 2.0) ** 2)
        weights /= weights.sum()
        hist = _integerize(weights, profile.pixel_count)
        t_us = round(k * 1_000_000 / profile.fps)
        frames.append(
            FrameFeature(
                frame_idx=k,
                pts_ms=t_us / 1000.0,
                t=t_us,
                luma_hist=hist,
                phash=rng.getrandbits(64),
            )
        )
    return frames


def _integerize(weights: np.ndarray, total: int) -> tuple[int, ...]:
    raw = weights * total
    counts = np.floor(raw).astype(int)
    shortfall = total - int(counts.sum())
    if shortfall > 0:
        order = np.argsort(-(raw - counts))
        counts[order[:shortfall]] += 1
    return tuple(int(c) for c in counts)


# --- tamper operations -----------------------------------------------------------------

def _clone(run: SyntheticRun) -> SyntheticRun:
    return SyntheticRun(
        case_id=run.case_id,
        profile=run.profile,
        events=list(run.events),
        audio=run.audio.copy(),
        frames=list(run.frames),
        lcg_seed=run.lcg_seed,
    )


def tamper_splice(
    run: SyntheticRun,
    gt: GroundTruth,
    t_cut_s: float,
    removed_s: float,
    snap_to_tick: bool = False,
) -> tuple[SyntheticRun, GroundTruth]:
    """Remove [t_cut, t_cut + removed) from all media streams and rejoin.

    The joint is not re-phased: periodic events step, re-stamped timer values
    leave the tick grid (unless the removal is snapped to it), the audio gains
    a seam and the frame sequence a hard jump.  Wall-clock streams (inputs,
    handcam) are left alone.
    """
    new_gt = GroundTruth(
        kind="splice",
        seed=gt.seed,
        params={**gt.params, "t_cut_s": t_cut_s, "removed_s": removed_s, "snap_to_tick": snap_to_tick},
        expected_rules=(
            "cyber.tick_misaligned", "cyber.phase_step", "cyber.seed_infeasible",
            "media.frame_cut", "media.audio_cliff", "media.av_drift",
            "media.hum_toggle", "media.dup_frames",
        ),
        interval_s=(t_cut_s, t_cut_s),
    )
    if removed_s == 0:
        return _clone(run), new_gt
    removed_ms = round(removed_s * 1000)
    if snap_to_tick:
        # snap to a 50 ms grid (a whole number of ticks for the default 60 Hz)
        removed_ms = max(50, round(removed_ms / 50) * 50)
    rem_us = removed_ms * 1000
    cut_us = round(t_cut_s * 1e6)
    rem_frac_s = Fraction(removed_ms, 1000)

    out = _clone(run)
    new_events: list[NormalizedEvent] = []
    for ev in out.events:
        if ev.stream in WALL_STREAMS:
            new_events.append(ev)
            continue
        if cut_us <= ev.t < cut_us + rem_us:
            continue  # removed footage
        if ev.t >= cut_us + rem_us:
            ev = replace(ev, t=ev.t - rem_us)
            if ev.kind is EventKind.TIMER_SAMPLE:
                payload = dict(ev.payload)
                payload["seconds"] = Fraction(payload["seconds"]) - rem_frac_s
                ev = replace(ev, payload=payload)
        new_events.append(ev)
    out.events = sort_events(new_events)

    sr = run.profile.sample_rate
    a = round(t_cut_s * sr)
    b = min(len(out.audio), a + round(removed_ms / 1000 * sr))
    out.audio = np.concatenate([out.audio[:a], out.audio[b:]])

    kept = [fr for fr in out.frames if not (cut_us <= fr.t < cut_us + rem_us)]
    new_frames = []
    for idx, fr in enumerate(kept):
        t_new = fr.t - rem_us if fr.t >= cut_us + rem_us else fr.t
        new_frames.append(replace(fr, frame_idx=idx, t=t_new, pts_ms=t_new / 1000.0))
    out.frames = new_frames
    return out, new_gt


def tamper_speedup(
    run: SyntheticRun,
    gt: GroundTruth,
    factor: float,
    interval_s: tuple[float, float],
) -> tuple[SyntheticRun, GroundTruth]:
    """Re-time media streams by ``factor`` inside the interval.

    In-game timer values are untouched (the engine kept its own time), so the
    fitted timer slope inside the window reads the speed factor; audio
    transients drift against the wall-clock input log.
    """
    a_s, b_s = interval_s
    new_gt = GroundTruth(
        kind="speedup",
        seed=gt.seed,
        params={**gt.params, "factor": factor, "interval_s": list(interval_s)},
        expected_rules=("media.playback_rate", "media.av_drift"),
        interval_s=(a_s, b_s),
    )
    if factor == 1.0:
        return _clone(run), new_gt
    a_us = round(a_s * 1e6)
    b_us = round(b_s * 1e6)
    shrink_us = (b_us - a_us) * (1.0 - 1.0 / factor)

    def remap(t: Micros) -> Micros:
        if t < a_us:
            return t
        if t <= b_us:
            return round(a_us + (t - a_us) / factor)
        return round(t - shrink_us)

    out = _clone(run)
    out.events = sort_events(
        ev if ev.stream in WALL_STREAMS else replace(ev, t=remap(ev.t)) for ev in out.events
    )
    out.frames = [
        replace(fr, t=remap(fr.t), pts_ms=remap(fr.t) / 1000.0) for fr in out.frames
    ]

    sr = run.profile.sample_rate
    ai = round(a_s * sr)
    bi = min(len(out.audio), round(b_s * sr))
    segment = out.audio[ai:bi]
    new_len = max(1, round(len(segment) / factor))
    resampled = np.interp(
        np.linspace(0.0, len(segment) - 1.0, new_len), np.arange(len(segment)), segment
    )
    out.audio = np.concatenate([out.audio[:ai], resampled, out.audio[bi:]])
    return out, new_gt


def tamper_prng_bias(
    run: SyntheticRun, gt: GroundTruth, p_fake: Fraction | float
) -> tuple[SyntheticRun, GroundTruth]:
    """Regenerate barter outcomes at a different success rate than the engine's."""
    p_true = run.profile.prng_p
    new_gt = GroundTruth(
        kind="prng_bias",
        seed=gt.seed,
        params={**gt.params, "p_fake": float(p_fake), "p_true": float(p_true)},
        expected_rules=("cyber.prng_tail",),
        interval_s=None,
    )
    if Fraction(p_fake) == p_true:
        return _clone(run), new_gt
    rng = random.Random((gt.seed << 8) ^ 0xB1A5)
    out = _clone(run)
    pf = float(p_fake)
    new_events = []
    ts: list[float] = []
    for ev in out.events:
        if ev.kind is EventKind.PROCEDURAL_OUTCOME and ev.payload.get("trial") == "barter":
            payload = dict(ev.payload)
            payload["success"] = rng.random() < pf
            ev = replace(ev, payload=payload)
            ts.append(ev.t / 1e6)
        new_events.append(ev)
    out.events = new_events
    if ts:
        new_gt.interval_s = (min(ts), max(ts))
    return out, new_gt


def tamper_embodiment(
    run: SyntheticRun,
    gt: GroundTruth,
    absent_interval_s: tuple[float, float],
    state_burst: bool = False,
) -> tuple[SyntheticRun, GroundTruth]:
    """Annotate a hand-absent interval; optionally keep 'aimed' state changes going."""
    a_s, b_s = absent_interval_s
    expected = ("physics.embodiment",) + (("cyber.state_rule",) if state_burst else ())
    new_gt = GroundTruth(
        kind="embodiment",
        seed=gt.seed,
        params={**gt.params, "absent_interval_s": list(absent_interval_s), "state_burst": state_burst},
        expected_rules=expected,
        interval_s=(a_s, b_s),
    )
    if a_s >= b_s:
        return _clone(run), new_gt
    out = _clone(run)
    extra = [
        _ev(round(a_s * 1e6), "handcam", EventKind.HAND_ACTIVITY, {"state": "absent"}, 90000),
        _ev(round(b_s * 1e6), "handcam", EventKind.HAND_ACTIVITY, {"state": "present"}, 90001),
    ]
    if state_burst:
        base = max(int(e.payload["new"]) for e in out.events
                   if e.kind is EventKind.GAME_STATE_CHANGE and e.payload.get("name") == "kill_count")
        mid = (a_s + b_s) / 2.0
        for j in range(3):
            extra.append(
                _ev(round((mid + 0.2 * j) * 1e6), "game", EventKind.GAME_STATE_CHANGE,
                    {"name": "kill_count", "old": base + 8 * j, "new": base + 8 * (j + 1)},
                    90002 + j)
            )
    out.events = sort_events(out.events + extra)
    return out, new_gt


# --- writing fixture cases to disk ----------------------------------------------------------

def write_run(run: SyntheticRun, gt: GroundTruth, out_dir: str) -> tuple[str, str]:
    """Write artefacts, manifest, config and ground truth; returns (manifest, config) paths."""
    os.makedirs(out_dir, exist_ok=True)
    inputs = [e for e in run.events if e.stream in WALL_STREAMS]
    game = [e for e in run.events if e.stream not in WALL_STREAMS]
    with open(os.path.join(out_dir, "inputs.jsonl"), "wb") as fh:
        fh.write(write_event_log(inputs))
    with open(os.path.join(out_dir, "game.jsonl"), "wb") as fh:
        fh.write(write_event_log(game))
    with open(os.path.join(out_dir, "frames.csv"), "wb") as fh:
        fh.write(write_frame_features(run.frames))
    buf = AudioBuffer(sample_rate_hz=run.profile.sample_rate, samples=run.audio, origin=0, stream="audio")
    with open(os.path.join(out_dir, "audio.wav"), "wb") as fh:
        fh.write(write_wav(buf))

    manifest = {
        "schema_version": 1,
        "case_id": run.case_id,
        "artefacts": [
            {"path": "inputs.jsonl", "format": "EventLogJsonl"},
            {"path": "game.jsonl", "format": "EventLogJsonl"},
            {"path": "frames.csv", "format": "FrameFeaturesCsv", "stream": "video"},
            {"path": "audio.wav", "format": "AudioWavPcm", "stream": "audio"},
        ],
        "fixture": {
            "taxonomy": gt.kind,
            "seed": gt.seed,
            "interval_s": list(gt.interval_s) if gt.interval_s else None,
            "expected_rules": list(gt.expected_rules),
        },
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    config_path = os.path.join(out_dir, "config.json")
    save_config(fixture_config(run.profile), config_path)

    with open(os.path.join(out_dir, "ground_truth.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"kind": gt.kind, "seed": gt.seed, "params": gt.params,
             "expected_rules": list(gt.expected_rules),
             "interval_s": list(gt.interval_s) if gt.interval_s else None,
             "profile": profile_to_doc(run.profile)},
            fh, indent=2, sort_keys=True,
        )
    return manifest_path, config_path


def profile_to_doc(profile: RunProfile) -> dict[str, Any]:
    doc = {}
    for name in profile.__dataclass_fields__:
        value = getattr(profile, name)
        doc[name] = f"{value.numerator}/{value.denominator}" if isinstance(value, Fraction) else value
    return doc


def profile_from_doc(doc: dict[str, Any]) -> RunProfile:
    kw = dict(doc)
    if "tick_rate" in kw:
        kw["tick_rate"] = Fraction(str(kw["tick_rate"]))
    if "prng_p" in kw:
        kw["prng_p"] = Fraction(str(kw["prng_p"]))
    return RunProfile(**kw)


def load_ground_truth(case_dir: str) -> GroundTruth:
    with open(os.path.join(case_dir, "ground_truth.json"), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return GroundTruth(
        kind=doc["kind"],
        seed=doc["seed"],
        params=doc.get("params", {}),
        expected_rules=tuple(doc.get("expected_rules", ())),
        interval_s=tuple(doc["interval_s"]) if doc.get("interval_s") else None,
    )


def load_fixture_profile(case_dir: str) -> RunProfile:
    with open(os.path.join(case_dir, "ground_truth.json"), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return profile_from_doc(doc.get("profile", {}))


def make_case(kind: str, seed: int, out_dir: str, profile: Optional[RunProfile] = None,
              **params: Any) -> tuple[str, str, GroundTruth]:
    """Generate one labelled case directory of the given manipulation class."""
    if kind == "speedup" and profile is None:
        profile = RunProfile(duration_s=110.0)
    profile = profile or RunProfile()
    run, gt = gen_clean_run(seed, profile)
    if kind == "clean":
        pass
    elif kind == "splice":
        rng = random.Random(seed ^ 0x5711CE)
        t_cut = params.get("t_cut_s", rng.uniform(0.35, 0.65) * profile.duration_s)
        removed = params.get("removed_s", rng.uniform(3.0, 8.0))
        run, gt = tamper_splice(run, gt, t_cut, removed, snap_to_tick=params.get("snap_to_tick", False))
    elif kind == "speedup":
        factor = params.get("factor", 1.25 if seed % 2 == 0 else 0.8)
        interval = params.get("interval_s", (40.0, 75.0))
        run, gt = tamper_speedup(run, gt, factor, interval)
    elif kind == "prng_bias":
        p_fake = params.get("p_fake", Fraction(3, 10))
        run, gt = tamper_prng_bias(run, gt, p_fake)
    elif kind == "embodiment":
        interval = params.get("absent_interval_s", (10.0, 14.0))
        run, gt = tamper_embodiment(run, gt, interval, state_burst=params.get("state_burst", False))
    else:
        raise ValueError(f"unknown fixture kind: {kind}")
    run.case_id = f"{kind}-{seed:04d}"
    manifest_path, config_path = write_run(run, gt, out_dir)
    return manifest_path, config_path, gt
