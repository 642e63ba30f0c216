import random
import statistics

import pytest
from hypothesis import given, settings, strategies as st

from tracer.config import DetectorConfig
from tracer.model import EventKind, NormalizedEvent, NotApplicable, Severity
from tracer.physics import (
    check_embodiment,
    check_interval_uniformity,
    check_reaction_floor,
    check_rollover,
)


def press(t_us, key="Z", i=0, stream="kbd"):
    return NormalizedEvent(f"p{i}", t_us, stream, EventKind.INPUT_PRESS, {"key": key})


def release(t_us, key="Z", i=0, stream="kbd"):
    return NormalizedEvent(f"r{i}", t_us, stream, EventKind.INPUT_RELEASE, {"key": key})


def stimulus(t_us, sid="s0", i=0):
    return NormalizedEvent(f"s{i}", t_us, "game", EventKind.STIMULUS_SHOWN, {"stimulus_id": sid})


def hand(t_us, state, i=0):
    return NormalizedEvent(f"h{i}", t_us, "handcam", EventKind.HAND_ACTIVITY, {"state": state})


# --- reaction floor -------------------------------------------------------------

def test_sub_floor_latency_is_critical_eligible(cfg):
    events = [stimulus(1_000_000), press(1_080_000)]
    flags = check_reaction_floor(events, cfg)
    assert len(flags) == 1
    f = flags[0]
    assert f.rule_id == "physics.reaction_floor"
    assert f.evidence["latency_ms"] == pytest.approx(80.0)
    assert f.score == pytest.approx(0.2)
    assert f.severity is Severity.CRITICAL  # per-rule thresholds make 80 ms critical


def test_typical_latency_not_flagged(cfg):
    events = [stimulus(1_000_000), press(1_250_000)]
    assert check_reaction_floor(events, cfg) == []


def test_anticipatory_press_scores_one(cfg):
    events = [stimulus(1_000_000), press(900_000)]
    flags = check_reaction_floor(events, cfg)
    assert len(flags) == 1
    assert flags[0].rule_id == "physics.anticipatory"
    assert flags[0].score == 1.0
    assert flags[0].severity is Severity.CRITICAL


def test_fast_but_borderline_latency_info_flag(cfg):
    # latency in [floor, range.low) is informational: score 0
    events = [stimulus(1_000_000), press(1_120_000)]
    flags = check_reaction_floor(events, cfg)
    assert len(flags) == 1
    assert flags[0].severity is Severity.INFO
    assert flags[0].score == 0.0


def test_response_keys_filter():
    # with a configured response-key set, other keys never pair with stimuli
    cfg2 = DetectorConfig(response_keys=("J",))
    events = [stimulus(1_000_000), press(1_050_000, key="Z"), press(1_080_000, key="J", i=1)]
    flags = check_reaction_floor(events, cfg2)
    assert len(flags) == 1
    assert flags[0].evidence["key"] == "J"
    assert flags[0].evidence["latency_ms"] == pytest.approx(80.0)


def test_no_flags_when_all_latencies_above_range_low(cfg):
    rng = random.Random(5)
    events = []
    for i in range(50):
        t = i * 3_000_000
        events.append(stimulus(t, i=i))
        events.append(press(t + round(rng.uniform(150, 600) * 1000), i=i))
    assert check_reaction_floor(events, cfg) == []


def test_lowering_floor_never_increases_flags(cfg):
    rng = random.Random(6)
    events = []
    for i in range(80):
        t = i * 3_000_000
        events.append(stimulus(t, i=i))
        events.append(press(t + round(rng.uniform(20, 400) * 1000), i=i))
    counts = []
    for floor in (150.0, 120.0, 100.0, 80.0, 50.0, 10.0):
        c = DetectorConfig(reaction_floor_ms=floor)
        reaction = [f for f in check_reaction_floor(events, c)
                    if f.rule_id == "physics.reaction_floor" and f.score > 0]
        counts.append(len(reaction))
    assert counts == sorted(counts, reverse=True)


def test_reaction_requires_stimuli(cfg):
    with pytest.raises(NotApplicable):
        check_reaction_floor([press(0)], cfg)


# --- rollover ---------------------------------------------------------------------

def _chord(n, t0=0, hold_us=1_000_000):
    events = []
    for i in range(n):
        key = f"K{i}"
        events.append(press(t0 + i * 1000, key=key, i=i))
        events.append(release(t0 + hold_us + i * 1000, key=key, i=i))
    return events


def test_eleven_keys_exceed_human_limit(cfg):
    flags = check_rollover(_chord(11), cfg)
    human = [f for f in flags if f.rule_id == "physics.rollover_human"]
    assert len(human) == 1
    assert human[0].evidence["peak_held"] == 11


def test_ten_keys_within_human_limit(cfg):
    assert check_rollover(_chord(10), cfg) == []


def test_device_limit_boundary():
    cfg6 = DetectorConfig(device_rollover_limit=6)
    assert check_rollover(_chord(6), cfg6) == []
    flags = check_rollover(_chord(7), cfg6)
    assert [f.rule_id for f in flags] == ["physics.rollover_device"]


def test_press_without_release_held_to_end(cfg):
    events = []
    for i in range(10):
        events.append(press(i * 1000, key=f"K{i}", i=i))  # never released
    events.append(press(100_000, key="K10", i=10))
    events.append(release(200_000, key="K10", i=10))
    flags = check_rollover(events, cfg)
    assert len(flags) == 1
    assert flags[0].evidence["peak_held"] == 11
    assert flags[0].t_end == 200_000


def test_unmatched_release_noted_not_flagged(cfg):
    events = [release(1000, key="Q"), press(2000), release(3000)]
    flags = check_rollover(events, cfg)
    assert flags == []


def test_rollover_translation_invariant(cfg):
    events = _chord(12)
    flags_a = check_rollover(events, cfg)
    shifted = [NormalizedEvent(e.id, e.t + 5_000_000, e.stream, e.kind, e.payload) for e in events]
    flags_b = check_rollover(shifted, cfg)
    assert len(flags_a) == len(flags_b)
    assert [f.rule_id for f in flags_a] == [f.rule_id for f in flags_b]
    assert [f.t_start + 5_000_000 for f in flags_a] == [f.t_start for f in flags_b]


# --- interval uniformity ---------------------------------------------------------------

def test_thirty_metronomic_presses_flagged(cfg):
    events = [press(i * 50_000, i=i) for i in range(30)]
    flags = check_interval_uniformity(events, cfg)
    assert len(flags) == 1
    assert flags[0].evidence["sigma_ms"] == 0.0
    assert flags[0].score == 1.0


def test_humanlike_jitter_not_flagged(cfg):
    rng = random.Random(12)
    times = []
    t = 0.0
    for _ in range(200):
        t += max(0.002, 0.25 + rng.gauss(0, 0.012))
        times.append(round(t * 1e6))
    intervals = [(b - a) / 1000 for a, b in zip(times, times[1:])]
    assert statistics.stdev(intervals) > 8.0  # fixture sanity: sigma ~ 12 ms
    events = [press(t, i=i) for i, t in enumerate(times)]
    assert check_interval_uniformity(events, cfg) == []


def test_nineteen_uniform_presses_below_min_repeats(cfg):
    events = [press(i * 50_000, i=i) for i in range(19)]
    assert check_interval_uniformity(events, cfg) == []


def test_submillisecond_runs_flagged(cfg):
    # 4 presses 0.5 ms apart -> 3 consecutive sub-ms intervals
    events = [press(i * 500, i=i) for i in range(4)]
    flags = check_interval_uniformity(events, cfg)
    assert len(flags) == 1
    assert flags[0].evidence["submilli_run"] == 3
    assert flags[0].severity is Severity.CRITICAL


def test_uniformity_deterministic(cfg):
    events = [press(i * 50_000, i=i) for i in range(40)]
    assert check_interval_uniformity(events, cfg) == check_interval_uniformity(events, cfg)


# --- embodiment -------------------------------------------------------------------------

def test_presses_during_absence_one_flag(cfg):
    events = [
        hand(0, "present"),
        hand(10_000_000, "absent", i=1),
        press(10_500_000),
        press(11_000_000, i=1),
        hand(12_000_000, "present", i=2),
    ]
    flags = check_embodiment(events, cfg)
    assert len(flags) == 1
    assert flags[0].evidence["press_count"] == 2
    assert flags[0].score == pytest.approx(0.2)
    assert flags[0].t_start == 10_500_000 and flags[0].t_end == 11_000_000


def test_hands_present_throughout(cfg):
    events = [hand(0, "present"), press(1_000_000), press(2_000_000, i=1)]
    assert check_embodiment(events, cfg) == []


def test_absence_without_inputs_not_flagged(cfg):
    events = [hand(0, "present"), hand(5_000_000, "absent", i=1), hand(6_000_000, "present", i=2),
              press(7_000_000)]
    assert check_embodiment(events, cfg) == []


def test_staged_absence_fixture_reaches_critical(cfg):
    # inputs keep arriving while the hands are away: the staged-stream scenario
    events = [hand(0, "present"), hand(10_000_000, "absent", i=1)]
    for i in range(12):
        events.append(press(10_200_000 + i * 300_000, i=i))
    events.append(hand(14_000_000, "present", i=2))
    flags = check_embodiment(events, cfg)
    assert len(flags) == 1
    assert flags[0].score == 1.0
    assert flags[0].severity is Severity.CRITICAL


def test_no_hand_stream_not_applicable(cfg):
    with pytest.raises(NotApplicable):
        check_embodiment([press(0)], cfg)


def test_absence_to_end_of_log(cfg):
    events = [hand(0, "absent"), press(1_000_000), press(2_000_000, i=1)]
    flags = check_embodiment(events, cfg)
    assert len(flags) == 1
    assert flags[0].evidence["press_count"] == 2


# --- purity across all detectors ----------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_detectors_pure_functions_of_inputs(seed):
    rng = random.Random(seed)
    events = []
    for i in range(rng.randrange(2, 40)):
        t = rng.randrange(0, 10_000_000)
        kind = rng.choice([EventKind.INPUT_PRESS, EventKind.INPUT_RELEASE, EventKind.STIMULUS_SHOWN])
        payload = {"key": rng.choice("AB")} if kind is not EventKind.STIMULUS_SHOWN else {"stimulus_id": "s"}
        events.append(NormalizedEvent(f"e{i}", t, "kbd", kind, payload))
    cfg = DetectorConfig()
    for check in (check_rollover, check_interval_uniformity):
        try:
            a = check(events, cfg)
            b = check(events, cfg)
        except NotApplicable:
            continue
        assert a == b
