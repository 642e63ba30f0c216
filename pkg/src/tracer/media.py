"""Media-continuity detectors: splices, ambience shifts, hum breaks, A/V drift.

Rule ids: media.audio_cliff, media.ambient_shift, media.hum_toggle,
media.frame_cut, media.dup_frames, media.av_drift, media.playback_rate.

Scans are deterministic, translation-invariant in time, and stateless; each
one analyses fixed-size windows so flag positions quote a window-granular
location.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .config import DetectorConfig
from .ingest import AudioBuffer, FrameFeature
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
from .timeline import AlignmentEstimate, estimate_alignment


def _flag(cfg: DetectorConfig, rule_id: str, t0: Micros, t1: Micros, score: float,
          evidence: dict, message: str) -> AnomalyFlag:
    score = clamp01(score)
    return AnomalyFlag(
        id="", rule_id=rule_id, module=Module.MEDIA, t_start=t0, t_end=t1,
        severity=severity_for(score, cfg.thresholds_for(rule_id)),
        score=score, evidence=evidence, message=message,
    )


# --- single-bin tone power -------------------------------------------------------

def goertzel_power(x: np.ndarray, sample_rate_hz: float, freq_hz: float) -> float:
    """Power |X_k|^2 of the DFT bin nearest ``freq_hz`` via the Goertzel recurrence.

    s[n] = x[n] + 2 cos(w) s[n-1] - s[n-2];
    |X_k|^2 = s[N-1]^2 + s[N-2]^2 - 2 cos(w) s[N-1] s[N-2].
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n == 0:
        return 0.0
    k = round(freq_hz * n / sample_rate_hz)
    w = 2.0 * math.pi * k / n
    coeff = 2.0 * math.cos(w)
    if n == 1:
        return float(x[0] * x[0])
    # lfilter runs the recurrence s[n] = x[n] + coeff*s[n-1] - s[n-2]
    s = lfilter([1.0], [1.0, -coeff, 1.0], x)
    s1, s2 = float(s[-1]), float(s[-2])
    return s1 * s1 + s2 * s2 - coeff * s1 * s2


def tone_amplitude_sq(x: np.ndarray, sample_rate_hz: float, freq_hz: float) -> float:
    """Squared amplitude of a tone at freq_hz (bin power normalised by (N/2)^2)."""
    n = len(x)
    if n == 0:
        return 0.0
    return goertzel_power(x, sample_rate_hz, freq_hz) * (2.0 / n) ** 2


# --- waveform continuity -----------------------------------------------------------

def audio_discontinuity_scan(buf: AudioBuffer, cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Flag sample-to-sample cliffs that quiet surroundings cannot explain.

    A cliff is |x[i] - x[i-1]| > delta_threshold with the 5 ms RMS on *both*
    sides (excluding the two samples at the jump) under quiet_rms: loud
    content legitimately produces large deltas, an edit in near-silence does
    not.  Cliffs within 50 ms merge into one flag.
    """
    x = buf.mono()
    sr = buf.sample_rate_hz
    w = max(1, round(0.005 * sr))
    if len(x) < 2 * w + 2:
        raise NotApplicable("audio shorter than two analysis windows")
    d = np.abs(np.diff(x))
    candidates = np.flatnonzero(d > cfg.delta_threshold)
    if len(candidates) == 0:
        return []
    energy = np.concatenate(([0.0], np.cumsum(x * x)))

    def window_rms(lo: int, hi: int) -> float:  # [lo, hi) clipped
        lo = max(0, lo)
        hi = min(len(x), hi)
        if hi <= lo:
            return 0.0
        return math.sqrt((energy[hi] - energy[lo]) / (hi - lo))

    cliffs: list[tuple[int, float]] = []
    for i in candidates:
        b = int(i) + 1  # jump is between samples b-1 and b
        left = window_rms(b - 1 - w, b - 1)
        right = window_rms(b + 1, b + 1 + w)
        if left < cfg.quiet_rms and right < cfg.quiet_rms:
            cliffs.append((b, float(d[i])))
    if not cliffs:
        return []

    merge_us = 50_000
    flags: list[AnomalyFlag] = []
    group: list[tuple[int, float]] = [cliffs[0]]
    for item in cliffs[1:]:
        prev_t = buf.sample_time_us(group[-1][0])
        if buf.sample_time_us(item[0]) - prev_t <= merge_us:
            group.append(item)
        else:
            flags.append(_cliff_flag(cfg, buf, group))
            group = [item]
    flags.append(_cliff_flag(cfg, buf, group))
    return flags


def _cliff_flag(cfg: DetectorConfig, buf: AudioBuffer, group: list[tuple[int, float]]) -> AnomalyFlag:
    peak = max(delta for _b, delta in group)
    t0 = buf.sample_time_us(group[0][0])
    t1 = buf.sample_time_us(group[-1][0])
    return _flag(
        cfg, "media.audio_cliff", t0, t1,
        0.4 + peak / 2.0,
        {"max_delta": peak, "cliff_count": len(group), "stream": buf.stream},
        f"waveform cliff of {peak:.2f} in quiet context",
    )


# --- ambient regime shifts ----------------------------------------------------------

def _window_features(x: np.ndarray, sr: int, win: int) -> tuple[np.ndarray, np.ndarray]:
    n_win = len(x) // win
    rms = np.empty(n_win)
    centroid = np.empty(n_win)
    freqs = np.fft.rfftfreq(win, d=1.0 / sr)
    for i in range(n_win):
        seg = x[i * win : (i + 1) * win]
        rms[i] = math.sqrt(float(np.mean(seg * seg)))
        mag = np.abs(np.fft.rfft(seg))
        total = float(mag.sum())
        centroid[i] = float((freqs * mag).sum() / total) if total > 0 else 0.0
    return rms, centroid


def ambient_shift_scan(buf: AudioBuffer, cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Detect persistent room-tone regime changes (level and spectral colour).

    A boundary is flagged when every window in the following persistence span
    sits beyond the RMS ratio against the preceding span *and* the mean
    spectral centroid moves by more than the configured fraction.  Brief SFX
    spikes fail the persistence requirement.
    """
    x = buf.mono()
    sr = buf.sample_rate_hz
    if len(x) < 2 * sr:
        raise NotApplicable("audio shorter than 2 s")
    win = max(1, round(cfg.ambient_window_ms / 1000.0 * sr))
    rms, centroid = _window_features(x, sr, win)
    p = cfg.ambient_persist_windows
    if len(rms) < 2 * p + 1:
        raise NotApplicable("too few ambience windows")

    eps = 1e-9
    boundaries: list[int] = []
    for b in range(p, len(rms) - p + 1 - (p - 1)):
        pre = slice(b - p, b)
        post = slice(b, b + p)
        pre_rms = float(np.mean(rms[pre])) + eps
        post_windows = rms[post]
        ratios = post_windows / pre_rms
        up = bool(np.all(ratios > cfg.ambient_rms_ratio))
        down = bool(np.all(ratios < 1.0 / cfg.ambient_rms_ratio))
        if not (up or down):
            continue
        pre_c = float(np.mean(centroid[pre])) + eps
        post_c = float(np.mean(centroid[post]))
        if abs(post_c - pre_c) / pre_c <= cfg.ambient_centroid_shift:
            continue
        boundaries.append(b)

    flags: list[AnomalyFlag] = []
    i = 0
    while i < len(boundaries):
        j = i
        while j + 1 < len(boundaries) and boundaries[j + 1] == boundaries[j] + 1:
            j += 1
        b = boundaries[i]
        t0 = buf.sample_time_us(b * win)
        t1 = buf.sample_time_us((boundaries[j] + 1) * win)
        pre_rms = float(np.mean(rms[b - p : b]))
        post_rms = float(np.mean(rms[b : b + p]))
        flags.append(
            _flag(
                cfg, "media.ambient_shift", t0, t1, 0.65,
                {"pre_rms": pre_rms, "post_rms": post_rms,
                 "pre_centroid_hz": float(np.mean(centroid[b - p : b])),
                 "post_centroid_hz": float(np.mean(centroid[b : b + p])),
                 "stream": buf.stream},
                f"ambient regime shift (RMS {pre_rms:.4f} -> {post_rms:.4f})",
            )
        )
        i = j + 1
    return flags


# --- power-line hum continuity --------------------------------------------------------

def hum_continuity_scan(buf: AudioBuffer, cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Track mains-hum presence per one-second window and flag toggles.

    Continuous recordings keep their hum signature; a present<->absent toggle
    marks a candidate joint between differently sourced segments.
    """
    if buf.sample_rate_hz < 4 * cfg.hum_hz:
        raise NotApplicable(f"sample rate too low to observe {cfg.hum_hz} Hz hum")
    x = buf.mono()
    win = max(1, round(cfg.hum_window_s * buf.sample_rate_hz))
    n_win = len(x) // win
    if n_win < 3:
        raise NotApplicable("audio shorter than three hum windows")
    powers = [tone_amplitude_sq(x[i * win : (i + 1) * win], buf.sample_rate_hz, cfg.hum_hz)
              for i in range(n_win)]
    present = [p > cfg.hum_floor for p in powers]
    flags: list[AnomalyFlag] = []
    trace = [round(p, 9) for p in powers]
    for i in range(2, n_win):
        if present[i] != present[i - 1]:
            boundary = buf.sample_time_us(i * win)
            word = "disappears" if present[i - 1] else "appears"
            flags.append(
                _flag(
                    cfg, "media.hum_toggle", boundary, boundary, 0.6,
                    {"window_index": i, "power_trace": trace, "hum_hz": cfg.hum_hz,
                     "stream": buf.stream},
                    f"{cfg.hum_hz:g} Hz hum {word} at window {i}",
                )
            )
    return flags


# --- frame-level continuity --------------------------------------------------------

def frame_diff_scan(frames: Sequence[FrameFeature], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Flag hard-cut candidates from luma-histogram jumps.

    Consecutive-histogram L1 distances are reduced to a robust z-score against
    the trailing window's median/MAD; gameplay footage has heavy-tailed frame
    deltas, so mean/std would misfire on action bursts.
    """
    if len(frames) < 30:
        raise NotApplicable("fewer than 30 frames")
    hists = np.array([f.luma_hist for f in frames], dtype=np.float64)
    pixels = hists.sum(axis=1)
    pixels[pixels == 0] = 1.0
    d = np.abs(np.diff(hists, axis=0)).sum(axis=1) / pixels[1:]

    flags: list[AnomalyFlag] = []
    run: list[int] = []
    zs: dict[int, float] = {}
    min_history = 10
    for i in range(len(d)):
        lo = max(0, i - cfg.cut_trailing)
        history = d[lo:i]
        if len(history) < min_history:
            continue
        med = float(np.median(history))
        mad = float(np.median(np.abs(history - med)))
        scale = max(1.4826 * mad, cfg.mad_floor)
        z = (float(d[i]) - med) / scale
        if z > cfg.cut_z:
            run.append(i)
            zs[i] = z
        elif run:
            flags.append(_cut_flag(cfg, frames, run, zs, d))
            run = []
    if run:
        flags.append(_cut_flag(cfg, frames, run, zs, d))
    return flags


def _cut_flag(cfg: DetectorConfig, frames: Sequence[FrameFeature], run: list[int],
              zs: dict[int, float], d: np.ndarray) -> AnomalyFlag:
    peak_i = max(run, key=lambda i: zs[i])
    t0 = frames[run[0]].t
    t1 = frames[run[-1] + 1].t
    z = zs[peak_i]
    return _flag(
        cfg, "media.frame_cut", t0, t1,
        z / (2.0 * cfg.cut_z),
        {"frame_idx": frames[peak_i + 1].frame_idx, "d": float(d[peak_i]), "z": z,
         "run_length": len(run)},
        f"hard cut candidate at frame {frames[peak_i + 1].frame_idx} (z={z:.1f})",
    )


def duplicate_frame_scan(frames: Sequence[FrameFeature], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Flag runs of identical perceptual hashes (splice padding, encoder freezes)."""
    if len(frames) < 2:
        raise NotApplicable("fewer than 2 frames")
    flags: list[AnomalyFlag] = []
    start = 0
    for i in range(1, len(frames) + 1):
        if i < len(frames) and frames[i].phash == frames[start].phash:
            continue
        run = i - start
        if run >= cfg.dup_run:
            flags.append(
                _flag(
                    cfg, "media.dup_frames", frames[start].t, frames[i - 1].t,
                    run / (2.0 * cfg.dup_run),
                    {"phash": f"{frames[start].phash:016x}", "run_length": run,
                     "first_frame_idx": frames[start].frame_idx},
                    f"{run} consecutive identical frames",
                )
            )
        start = i
    return flags


# --- audio/visual synchrony -----------------------------------------------------------

def av_sync_check(
    transients: Sequence[NormalizedEvent],
    input_events: Sequence[NormalizedEvent],
    cfg: DetectorConfig,
) -> tuple[list[AnomalyFlag], Optional[AlignmentEstimate]]:
    """Fit audio-transient times against input presses and flag drift/residuals.

    A constant offset is ubiquitous capture latency and is never flagged; only
    a stretched clock (|drift-1| over tolerance) or residual spikes beyond
    ``resid_tol_ms`` indicate time-warped or patched media.
    """
    presses = [e for e in input_events if e.kind is EventKind.INPUT_PRESS]
    trans = [e for e in transients if e.kind is EventKind.AUDIO_TRANSIENT]
    est = estimate_alignment(presses, trans, cfg.max_pair_gap_ms,
                             stream=trans[0].stream if trans else "audio")
    if est.n_pairs < cfg.min_pairs:
        raise NotApplicable(f"only {est.n_pairs} matchable audio/input pairs")
    drift_dev = abs(est.drift_rate - 1.0)
    resid_ms = est.residual_rms_us / 1000.0
    if drift_dev <= cfg.drift_tol and resid_ms <= cfg.resid_tol_ms:
        return [], est
    span_lo = min(e.t for e in trans)
    span_hi = max(e.t for e in trans)
    ratio = max(drift_dev / cfg.drift_tol, resid_ms / cfg.resid_tol_ms)
    reason = "clock drift" if drift_dev > cfg.drift_tol else "residual spikes"
    return [
        _flag(
            cfg, "media.av_drift", span_lo, span_hi,
            0.4 + 0.2 * ratio,
            {"drift_rate": est.drift_rate, "offset_us": est.offset_us,
             "residual_rms_ms": resid_ms, "n_pairs": est.n_pairs},
            f"audio/input desynchronisation: {reason} "
            f"(drift {est.drift_rate:.4f}, residual {resid_ms:.1f} ms)",
        )
    ], est


# --- playback rate -----------------------------------------------------------------

def playback_rate_check(timer_events: Sequence[NormalizedEvent], cfg: DetectorConfig) -> list[AnomalyFlag]:
    """Compare in-game timer progression against the master clock.

    Fits slope (in-game seconds per wall second) over sliding windows; legit
    footage advances 1:1, re-timed footage shows the speed factor.  Timer
    resets split the fit into segments.
    """
    samples = [e for e in timer_events if e.kind is EventKind.TIMER_SAMPLE]
    if len(samples) < 10:
        raise NotApplicable("fewer than 10 timer samples")
    samples.sort(key=lambda e: e.sort_key())
    pts = [(e.t / 1e6, float(Fraction(e.payload["seconds"]))) for e in samples]

    segments: list[list[tuple[float, float]]] = [[pts[0]]]
    for prev, cur in zip(pts, pts[1:]):
        if cur[1] < prev[1]:  # timer reset
            segments.append([cur])
        else:
            segments[-1].append(cur)

    window = cfg.rate_window_s
    step = window / 2.0
    flags: list[AnomalyFlag] = []
    for seg in segments:
        if len(seg) < 5:
            continue
        t = np.array([p[0] for p in seg])
        v = np.array([p[1] for p in seg])
        start = float(t[0])
        stop = float(t[-1])
        run: list[tuple[float, float, float]] = []  # (win_lo, win_hi, slope)
        w0 = start
        while w0 < stop:
            w1 = w0 + window
            m = (t >= w0) & (t <= w1)
            if m.sum() >= 5 and (t[m].max() - t[m].min()) >= window / 2.0:
                slope = float(np.polyfit(t[m], v[m], 1)[0])
                if abs(slope - 1.0) > cfg.rate_tol:
                    run.append((w0, min(w1, stop), slope))
                elif run:
                    flags.append(_rate_flag(cfg, run))
                    run = []
            w0 += step
        if run:
            flags.append(_rate_flag(cfg, run))
    return flags


def _rate_flag(cfg: DetectorConfig, run: list[tuple[float, float, float]]) -> AnomalyFlag:
    slopes = [s for _a, _b, s in run]
    worst = max(slopes, key=lambda s: abs(s - 1.0))
    t0 = round(run[0][0] * 1e6)
    t1 = round(run[-1][1] * 1e6)
    return _flag(
        cfg, "media.playback_rate", t0, t1,
        0.5 + 2.0 * abs(worst - 1.0),
        {"slopes": [round(s, 5) for s in slopes], "windows": len(run)},
        f"in-game timer advances {worst:.3f} s per wall second",
    )
