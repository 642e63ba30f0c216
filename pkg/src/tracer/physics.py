"""Physics-coherence detectors: are the inputs humanly and physically plausible?

Rule ids: physics.reaction_floor, physics.anticipatory, physics.rollover_human,
physics.rollover_device, physics.uniformity, physics.embodiment.

All detectors are pure functions of (events, config): equal inputs produce
identical flag lists.
"""
from __future__ import annotations

import statistics
from typing import Iterable, Optional, Sequence

from .config import DetectorConfig
from .model import (
    AnomalyFlag,
    EventKind,
    Micros,
    Module,
    NormalizedEvent,
    NotApplicable,
    clamp01,
    severity_for,
)


def _flag(cfg: DetectorConfig, rule_id: str, t0: Micros, t1: Micros, score: float,
          evidence: dict, message: str) -> AnomalyFlag:
    score = clamp01(score)
    return AnomalyFlag(
        id="",
        rule_id=rule_id,
        module=Module.PHYSICS,
        t_start=t0,
        t_end=t1,
        severity=severity_for(score, cfg.thresholds_for(rule_id)),
        score=score,
        evidence=evidence,
        message=message,
    )


def check_reaction_floor(events: Sequence[NormalizedEvent], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Compare stimulus-to-input latencies against human reaction limits.

    Each stimulus is paired with the first unconsumed response-key press inside
    [t - anticipation_window, t + stimulus_window].  Latencies under the
    configured floor are scored (floor - latency) / floor; presses that
    precede their stimulus are causality violations and score 1.0.
    """
    stimuli = [e for e in events if e.kind is EventKind.STIMULUS_SHOWN]
    presses = [e for e in events if e.kind is EventKind.INPUT_PRESS]
    if cfg.response_keys is not None:
        keys = set(cfg.response_keys)
        presses = [e for e in presses if e.payload.get("key") in keys]
    if not stimuli:
        raise NotApplicable("no StimulusShown events")
    if not presses:
        raise NotApplicable("no matchable InputPress events")
    stimuli.sort(key=lambda e: e.t)
    presses.sort(key=lambda e: e.t)

    floor_ms = cfg.reaction_floor_ms
    low_ms = cfg.typical_reaction_range_ms[0]
    window_us = round(cfg.stimulus_window_ms * 1000)
    anticipation_us = round(cfg.anticipation_window_ms * 1000)

    flags: list[AnomalyFlag] = []
    next_press = 0
    for stim in stimuli:
        lo = stim.t - anticipation_us
        hi = stim.t + window_us
        while next_press < len(presses) and presses[next_press].t < lo:
            next_press += 1
        if next_press >= len(presses) or presses[next_press].t > hi:
            continue  # unanswered stimulus
        press = presses[next_press]
        next_press += 1
        latency_ms = (press.t - stim.t) / 1000.0
        evidence = {
            "stimulus_id": stim.payload.get("stimulus_id"),
            "stimulus_t_us": stim.t,
            "press_t_us": press.t,
            "latency_ms": latency_ms,
            "key": press.payload.get("key"),
        }
        if latency_ms < 0:
            flags.append(
                _flag(cfg, "physics.anticipatory", press.t, stim.t, 1.0, evidence,
                      f"anticipatory input: press {-latency_ms:.1f} ms before stimulus")
            )
        elif latency_ms < low_ms:
            score = clamp01((floor_ms - latency_ms) / floor_ms)
            label = "below human reaction floor" if latency_ms < floor_ms else "unusually fast reaction"
            flags.append(
                _flag(cfg, "physics.reaction_floor", stim.t, press.t, score, evidence,
                      f"{label}: {latency_ms:.1f} ms")
            )
    return flags


def _held_intervals(events: Sequence[NormalizedEvent]) -> tuple[list[tuple[Micros, int, int]], list[str]]:
    """Sweep press/release events into (time, delta, running count) steps per stream."""
    notes: list[str] = []
    steps: list[tuple[Micros, int]] = []
    held: dict[tuple[str, str], int] = {}
    for ev in sorted(events, key=lambda e: e.sort_key()):
        if ev.kind is EventKind.INPUT_PRESS:
            key = (ev.stream, str(ev.payload.get("key")))
            held[key] = held.get(key, 0) + 1
            if held[key] == 1:
                steps.append((ev.t, +1))
        elif ev.kind is EventKind.INPUT_RELEASE:
            key = (ev.stream, str(ev.payload.get("key")))
            if held.get(key, 0) == 0:
                notes.append(f"unmatched release of '{key[1]}' at {ev.t} us ignored")
                continue
            held[key] -= 1
            if held[key] == 0:
                steps.append((ev.t, -1))
    count = 0
    out: list[tuple[Micros, int, int]] = []
    for t, delta in steps:
        count += delta
        out.append((t, delta, count))
    return out, notes


def check_rollover(events: Sequence[NormalizedEvent], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Flag periods where more keys are held than humans or hardware allow."""
    input_events = [e for e in events if e.kind in (EventKind.INPUT_PRESS, EventKind.INPUT_RELEASE)]
    if not input_events:
        raise NotApplicable("no input events")
    steps, notes = _held_intervals(input_events)
    end_t = max(e.t for e in input_events)

    flags: list[AnomalyFlag] = []
    limits = [("physics.rollover_human", cfg.max_simultaneous_inputs, 0.6, "human simultaneous-input limit")]
    if cfg.device_rollover_limit is not None:
        limits.append(("physics.rollover_device", cfg.device_rollover_limit, 0.7, "device key-rollover limit"))
    for rule_id, limit, base, label in limits:
        start: Optional[Micros] = None
        peak = 0
        for t, _delta, count in steps:
            if count > limit and start is None:
                start = t
                peak = count
            elif count > limit:
                peak = max(peak, count)
            elif start is not None:
                flags.append(
                    _flag(cfg, rule_id, start, t, base + 0.1 * (peak - limit),
                          {"limit": limit, "peak_held": peak, "notes": notes},
                          f"{peak} keys held exceeds {label} of {limit}")
                )
                start = None
        if start is not None:
            flags.append(
                _flag(cfg, rule_id, start, end_t, base + 0.1 * (peak - limit),
                      {"limit": limit, "peak_held": peak, "notes": notes},
                      f"{peak} keys held exceeds {label} of {limit} (to end of log)")
            )
    return flags


def check_interval_uniformity(events: Sequence[NormalizedEvent], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Detect mechanically regular key repetition.

    Two symptoms: a sliding window of ``min_repeats`` same-key presses whose
    inter-press standard deviation falls under ``sigma_floor_ms``, and runs of
    three or more consecutive sub-millisecond intervals.
    """
    by_key: dict[tuple[str, str], list[Micros]] = {}
    for ev in events:
        if ev.kind is EventKind.INPUT_PRESS:
            by_key.setdefault((ev.stream, str(ev.payload.get("key"))), []).append(ev.t)
    if not by_key:
        raise NotApplicable("no input presses")

    flags: list[AnomalyFlag] = []
    w = cfg.min_repeats
    for (stream, key), ts in sorted(by_key.items()):
        ts.sort()
        if len(ts) >= 2:
            intervals_ms = [(b - a) / 1000.0 for a, b in zip(ts, ts[1:])]
        else:
            intervals_ms = []
        # windows of min_repeats presses with near-zero dispersion
        run_start: Optional[int] = None
        run_end = 0
        for i in range(0, len(ts) - w + 1):
            window = intervals_ms[i : i + w - 1]
            sigma = statistics.stdev(window)
            if sigma < cfg.sigma_floor_ms:
                if run_start is None:
                    run_start = i
                run_end = i + w - 1
            elif run_start is not None:
                flags.append(_uniformity_flag(cfg, stream, key, ts, intervals_ms, run_start, run_end))
                run_start = None
        if run_start is not None:
            flags.append(_uniformity_flag(cfg, stream, key, ts, intervals_ms, run_start, run_end))
        # >=3 consecutive sub-millisecond intervals
        sub_run = 0
        for i, iv in enumerate(intervals_ms):
            if iv < 1.0:
                sub_run += 1
                continue
            if sub_run >= 3:
                flags.append(_submilli_flag(cfg, stream, key, ts, i - sub_run, i, sub_run))
            sub_run = 0
        if sub_run >= 3:
            i = len(intervals_ms)
            flags.append(_submilli_flag(cfg, stream, key, ts, i - sub_run, i, sub_run))
    return flags


def _uniformity_flag(cfg, stream, key, ts, intervals_ms, i0, i1) -> AnomalyFlag:
    window = intervals_ms[i0:i1]
    mean = statistics.fmean(window)
    sigma = statistics.stdev(window)
    score = 1.0 if sigma == 0 else clamp01(1.0 - sigma / cfg.sigma_floor_ms)
    return _flag(
        cfg, "physics.uniformity", ts[i0], ts[i1],
        score,
        {"stream": stream, "key": key, "mean_ms": mean, "sigma_ms": sigma, "n": len(window) + 1},
        f"key '{key}': {len(window) + 1} presses with sigma {sigma:.3f} ms",
    )


def _submilli_flag(cfg, stream, key, ts, i0, i1, run) -> AnomalyFlag:
    return _flag(
        cfg, "physics.uniformity", ts[i0], ts[i1],
        clamp01(0.5 + run / 10.0),
        {"stream": stream, "key": key, "submilli_run": run},
        f"key '{key}': {run} consecutive sub-millisecond intervals",
    )


def check_embodiment(events: Sequence[NormalizedEvent], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Flag input presses that occur while the player's hands are annotated absent."""
    hand = [e for e in events if e.kind is EventKind.HAND_ACTIVITY]
    if not hand:
        raise NotApplicable("no hand-activity annotations")
    presses = [e for e in events if e.kind is EventKind.INPUT_PRESS]
    hand.sort(key=lambda e: e.t)
    end_t = max((e.t for e in events), default=0)

    absent_intervals: list[tuple[Micros, Micros]] = []
    absent_since: Optional[Micros] = None
    for ev in hand:
        state = ev.payload.get("state")
        if state == "absent" and absent_since is None:
            absent_since = ev.t
        elif state == "present" and absent_since is not None:
            absent_intervals.append((absent_since, ev.t))
            absent_since = None
    if absent_since is not None:
        absent_intervals.append((absent_since, end_t + 1))  # open-ended: include the last event

    flags: list[AnomalyFlag] = []
    for lo, hi in absent_intervals:
        offenders = [p for p in presses if lo <= p.t < hi]
        if not offenders:
            continue
        k = len(offenders)
        flags.append(
            _flag(
                cfg, "physics.embodiment", offenders[0].t, offenders[-1].t,
                min(1.0, k / 10.0),
                {"absent_from_us": lo, "absent_to_us": hi, "press_count": k,
                 "keys": sorted({str(p.payload.get("key")) for p in offenders})},
                f"{k} input presses during hand-absent interval",
            )
        )
    return flags
