"""Five-step orchestration: acquire, normalise, attribute, analyse, synthesise.

Detectors fan out (optionally across worker threads) and fan back in through
a deterministic order-normalisation step, so parallelism can never perturb a
report: identical manifest and config bytes produce identical report bytes.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional, Sequence

if TYPE_CHECKING:
    from .store import CaseStore

from . import cyber, media, physics
from .config import DetectorConfig, LcgModel
from .ingest import load_case
from .model import AnomalyFlag, CaseBundle, EventKind, NotApplicable
from .timeline import attribute_events, estimate_alignment
from .verdict import Classification, VerdictReport, build_verdict


@dataclass(frozen=True)
class DetectorSpec:
    name: str
    run: Callable[[CaseBundle, DetectorConfig], tuple[list[AnomalyFlag], list[str]]]


def _audio_scan(scan):
    def run(bundle: CaseBundle, cfg: DetectorConfig):
        if not bundle.audio:
            raise NotApplicable("no audio artefacts")
        flags: list[AnomalyFlag] = []
        for _stream, buf in sorted(bundle.audio.items()):
            flags.extend(scan(buf, cfg))
        return flags, []
    return run


def _run_reaction(bundle, cfg):
    return physics.check_reaction_floor(bundle.events, cfg), []


def _run_rollover(bundle, cfg):
    return physics.check_rollover(bundle.events, cfg), []


def _run_uniformity(bundle, cfg):
    return physics.check_interval_uniformity(bundle.events, cfg), []


def _run_embodiment(bundle, cfg):
    return physics.check_embodiment(bundle.events, cfg), []


def _run_frame_diff(bundle, cfg):
    return media.frame_diff_scan(bundle.frames, cfg), []


def _run_dup_frames(bundle, cfg):
    return media.duplicate_frame_scan(bundle.frames, cfg), []


def _run_av_sync(bundle, cfg):
    transients = bundle.events_of(EventKind.AUDIO_TRANSIENT)
    inputs = bundle.events_of(EventKind.INPUT_PRESS)
    flags, _est = media.av_sync_check(transients, inputs, cfg)
    return flags, []


def _run_playback_rate(bundle, cfg):
    return media.playback_rate_check(bundle.events_of(EventKind.TIMER_SAMPLE), cfg), []


def _run_prng(bundle, cfg):
    return cyber.prng_plausibility(bundle.events, cfg)


def _run_seed_feasibility(bundle, cfg):
    models = [m for m in cfg.prng_models if isinstance(m, LcgModel)]
    if not models:
        raise NotApplicable("no LCG models configured")
    outcomes = bundle.events_of(EventKind.PROCEDURAL_OUTCOME)
    flags: list[AnomalyFlag] = []
    notes: list[str] = []
    for model in models:
        result, flag = cyber.seed_feasibility_scan(outcomes, model, cfg)
        notes.append(
            f"model '{model.name}': {result.match_count} feasible seed(s) over "
            f"[{result.seed_space[0]}, {result.seed_space[1]}) for {result.outcomes_checked} outcomes"
        )
        if flag is not None:
            flags.append(flag)
    return flags, notes


def _run_tick_alignment(bundle, cfg):
    return cyber.tick_alignment_check(bundle.events_of(EventKind.TIMER_SAMPLE), cfg), []


def _run_periodic_phase(bundle, cfg):
    return cyber.periodic_phase_sweep(bundle.events, cfg), []


def _run_state_rules(bundle, cfg):
    return cyber.state_transition_check(bundle.events, cfg)


DETECTORS: tuple[DetectorSpec, ...] = (
    DetectorSpec("reaction_floor", _run_reaction),
    DetectorSpec("rollover", _run_rollover),
    DetectorSpec("interval_uniformity", _run_uniformity),
    DetectorSpec("embodiment", _run_embodiment),
    DetectorSpec("audio_discontinuity", _audio_scan(media.audio_discontinuity_scan)),
    DetectorSpec("ambient_shift", _audio_scan(media.ambient_shift_scan)),
    DetectorSpec("hum_continuity", _audio_scan(media.hum_continuity_scan)),
    DetectorSpec("frame_diff", _run_frame_diff),
    DetectorSpec("duplicate_frames", _run_dup_frames),
    DetectorSpec("av_sync", _run_av_sync),
    DetectorSpec("playback_rate", _run_playback_rate),
    DetectorSpec("prng_plausibility", _run_prng),
    DetectorSpec("seed_feasibility", _run_seed_feasibility),
    DetectorSpec("tick_alignment", _run_tick_alignment),
    DetectorSpec("periodic_phase", _run_periodic_phase),
    DetectorSpec("state_rules", _run_state_rules),
)


def _execute_detector(spec: DetectorSpec, bundle: CaseBundle, cfg: DetectorConfig):
    try:
        flags, notes = spec.run(bundle, cfg)
        return {"status": "applied", "detail": "; ".join(notes)}, flags
    except NotApplicable as na:
        return {"status": "not_applicable", "detail": na.reason}, []
    except Exception as exc:  # contain detector crashes; they become coverage entries
        return {"status": "failed", "detail": f"{type(exc).__name__}: {exc}"}, []


def analyze_bundle(bundle: CaseBundle, cfg: DetectorConfig, workers: int = 1) -> CaseBundle:
    """Run attribution, alignment and all detectors over an ingested bundle."""
    bundle.events = attribute_events(bundle.events, cfg)

    presses = bundle.events_of(EventKind.INPUT_PRESS)
    alignments = []
    for stream in sorted(bundle.audio):
        transients = [e for e in bundle.events_of(EventKind.AUDIO_TRANSIENT) if e.stream == stream]
        est = estimate_alignment(presses, transients, cfg.max_pair_gap_ms, stream=stream)
        alignments.append(est)
    bundle.alignments = alignments

    if workers <= 1:
        outcomes = [_execute_detector(spec, bundle, cfg) for spec in DETECTORS]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_execute_detector, spec, bundle, cfg) for spec in DETECTORS]
            outcomes = [f.result() for f in futures]  # registry order, not completion order

    coverage: dict[str, dict[str, str]] = {}
    flags: list[AnomalyFlag] = []
    for spec, (entry, detector_flags) in zip(DETECTORS, outcomes):
        coverage[spec.name] = entry
        flags.extend(detector_flags)

    flags.sort(key=lambda f: (f.rule_id, f.t_start, f.t_end, f.message))
    bundle.flags = [f.with_id(f"F{i:04d}") for i, f in enumerate(flags, start=1)]
    bundle.coverage = coverage
    bundle.verdict = build_verdict(bundle, cfg)
    return bundle


def run_pipeline(
    manifest_path: str,
    cfg: DetectorConfig,
    store: Optional["CaseStore"] = None,
    workers: int = 1,
) -> CaseBundle:
    """Full pipeline from a manifest on disk to an analysed (optionally persisted) bundle."""
    bundle = load_case(manifest_path, cfg)
    bundle = analyze_bundle(bundle, cfg, workers=workers)
    if store is not None:
        store.save_revision(bundle, cfg)
    return bundle


def classification_exit_code(classification: Classification) -> int:
    """CLI contract: 0 Clean, 1 Inconclusive, 3 Suspicious/Manipulated (2 = error)."""
    return {
        Classification.CLEAN: 0,
        Classification.INCONCLUSIVE: 1,
        Classification.SUSPICIOUS: 3,
        Classification.MANIPULATED: 3,
    }[classification]
