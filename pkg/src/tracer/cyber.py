"""Cyberspace-consistency detectors: engine timing, PRNG plausibility, state logic.

Rule ids: cyber.prng_tail, cyber.seed_infeasible, cyber.tick_misaligned,
cyber.phase_outlier, cyber.phase_step, cyber.state_rule.

Statistical verdicts here must never owe anything to floating-point error, so
binomial tails and tick checks run in exact big-integer rational arithmetic
and are only rendered to floats for reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np

from .config import BernoulliModel, DetectorConfig, LcgModel, PeriodicEventSpec, StateRule
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
        id="", rule_id=rule_id, module=Module.CYBER, t_start=t0, t_end=t1,
        severity=severity_for(score, cfg.thresholds_for(rule_id)),
        score=score, evidence=evidence, message=message,
    )


# --- exact binomial tail ---------------------------------------------------------

def binom_tail(n: int, k: int, p: Fraction) -> Fraction:
    """P(X >= k) for X ~ Binomial(n, p), exact.

    Terms are accumulated as integers over the common denominator
    denom(p)**n using the multiplicative recurrence
    C(n,i+1)/C(n,i) = (n-i)/(i+1); only the final reduction builds a Fraction.
    """
    if not isinstance(n, int) or not isinstance(k, int):
        raise ValueError("n and k must be integers")
    if k < 0 or k > n or n < 0:
        raise ValueError(f"need 0 <= k <= n, got n={n} k={k}")
    p = Fraction(p)
    if not (0 < p < 1):
        raise ValueError(f"need 0 < p < 1, got p={p}")
    a = p.numerator
    b = p.denominator
    c = b - a
    # T_i = C(n,i) * a^i * c^(n-i); tail = sum_{i=k..n} T_i / b^n
    term = math.comb(n, k) * a**k * c ** (n - k)
    total = term
    for i in range(k, n):
        term = term * (n - i) * a // ((i + 1) * c)
        total += term
    return Fraction(total, b**n)


def log10_fraction(f: Fraction) -> float:
    """log10 of a positive rational, stable far beyond float range."""
    if f <= 0:
        raise ValueError("log10 of non-positive rational")
    return math.log10(f.numerator) - math.log10(f.denominator)


# --- PRNG plausibility -------------------------------------------------------------

def prng_plausibility(
    events: Sequence[NormalizedEvent], cfg: DetectorConfig
) -> tuple[list[AnomalyFlag], list[str]]:
    """Exact upper-tail test of observed trial successes against known rates.

    The tail probability is multiplied by a conservative selection-effect
    correction (analysed trial kinds x session segments, unless overridden)
    before comparison against alpha; trial kinds with no configured model are
    reported unevaluated.
    """
    outcomes = [e for e in events if e.kind is EventKind.PROCEDURAL_OUTCOME]
    models = {m.trial: m for m in cfg.prng_models if isinstance(m, BernoulliModel)}
    if not models:
        raise NotApplicable("no Bernoulli trial models configured")
    if not outcomes:
        raise NotApplicable("no procedural outcomes observed")

    by_trial: dict[str, list[NormalizedEvent]] = {}
    for ev in outcomes:
        by_trial.setdefault(str(ev.payload["trial"]), []).append(ev)

    notes: list[str] = []
    analyzed = [t for t in sorted(by_trial) if t in models]
    for t in sorted(by_trial):
        if t not in models:
            notes.append(f"trial kind '{t}' has no configured model; unevaluated")
    for t in sorted(models):
        if t not in by_trial:
            notes.append(f"trial kind '{t}': no outcomes observed (insufficient data)")
    correction = cfg.correction_factor
    if correction is None:
        correction = max(1, len(analyzed)) * max(1, cfg.session_segments)

    flags: list[AnomalyFlag] = []
    for trial in analyzed:
        evs = by_trial[trial]
        model = models[trial]
        n = len(evs)
        k = sum(1 for e in evs if e.payload["success"])
        if n == 0:
            notes.append(f"trial kind '{trial}': insufficient data")
            continue
        if k == 0:
            continue  # an upper-tail of zero successes is never suspicious
        tail = binom_tail(n, k, model.p)
        p_adj = min(Fraction(1), tail * correction)
        if p_adj >= cfg.alpha:
            continue
        score = min(1.0, -log10_fraction(p_adj) / 12.0)
        flags.append(
            _flag(
                cfg, "cyber.prng_tail", evs[0].t, evs[-1].t, score,
                {"trial": trial, "n": n, "k": k,
                 "p": f"{model.p.numerator}/{model.p.denominator}",
                 "tail": float(tail), "tail_log10": log10_fraction(tail),
                 "p_adj": float(p_adj), "p_adj_log10": log10_fraction(p_adj),
                 "correction": int(correction)},
                f"trial '{trial}': {k}/{n} successes at p={model.p} "
                f"(adjusted tail 1e{log10_fraction(p_adj):.1f})",
            )
        )
    return flags, notes


# --- LCG seed feasibility -------------------------------------------------------------

@dataclass(frozen=True)
class FeasibilityResult:
    model: str
    seed_space: tuple[int, int]
    outcomes_checked: int
    matching_seeds: tuple[int, ...]  # capped at 64 entries
    match_count: int


def _lcg_success_vector(model: LcgModel, seed: int, n: int) -> list[bool]:
    s = seed
    out = []
    for _ in range(n):
        s = (model.multiplier * s + model.increment) % model.modulus
        out.append(((s >> model.out_shift) % model.out_mod) < model.out_threshold)
    return out


def seed_feasibility_scan(
    outcomes: Sequence[NormalizedEvent], model: LcgModel, cfg: DetectorConfig
) -> tuple[FeasibilityResult, Optional[AnomalyFlag]]:
    """Brute-force the seed space for seeds reproducing the observed outcomes.

    An empty feasible set is a Critical finding: no seed of the declared
    generator can produce the submitted sequence.  The scan runs vectorised
    in chunks and prunes dead seeds after every trial.
    """
    lo, hi = model.seed_space
    size = hi - lo
    if size > cfg.max_bruteforce:
        raise NotApplicable(
            f"seed space of {size} exceeds max_bruteforce={cfg.max_bruteforce}; "
            "narrow the space or raise the budget"
        )
    seq = [bool(e.payload["success"]) for e in outcomes
           if e.kind is EventKind.PROCEDURAL_OUTCOME and e.payload.get("trial") == model.trial]
    if not seq:
        result = FeasibilityResult(model.name, (lo, hi), 0, (), size)
        return result, None  # vacuously feasible

    observed = np.array(seq, dtype=bool)
    matches: list[int] = []
    chunk = 1 << 16
    for base in range(lo, hi, chunk):
        seeds = np.arange(base, min(base + chunk, hi), dtype=np.uint64)
        states = seeds % np.uint64(model.modulus)
        alive = np.ones(len(seeds), dtype=bool)
        for want in observed:
            states[alive] = (states[alive] * np.uint64(model.multiplier)
                             + np.uint64(model.increment)) % np.uint64(model.modulus)
            got = ((states[alive] >> np.uint64(model.out_shift))
                   % np.uint64(model.out_mod)) < np.uint64(model.out_threshold)
            alive[np.flatnonzero(alive)[got != want]] = False
            if not alive.any():
                break
        matches.extend(int(s) for s in seeds[alive])

    result = FeasibilityResult(
        model=model.name, seed_space=(lo, hi), outcomes_checked=len(seq),
        matching_seeds=tuple(matches[:64]), match_count=len(matches),
    )
    if matches:
        return result, None
    ts = [e.t for e in outcomes if e.kind is EventKind.PROCEDURAL_OUTCOME]
    flag = _flag(
        cfg, "cyber.seed_infeasible", min(ts), max(ts), 1.0,
        {"model": model.name, "seed_space": [lo, hi], "outcomes": len(seq), "matches": 0},
        f"no seed in [{lo}, {hi}) generates the observed '{model.trial}' sequence",
    )
    return result, flag


# --- engine tick alignment --------------------------------------------------------------

def tick_alignment_check(
    timer_events: Sequence[NormalizedEvent], cfg: DetectorConfig
) -> list[AnomalyFlag]:
    """Check that displayed timer values are whole multiples of the tick period.

    Exact rational comparison: a value v passes iff v * tick_rate is within
    tick_epsilon of an integer.  With the default epsilon of zero there are no
    float false positives by construction.
    """
    if cfg.tick_rate_hz is None:
        raise NotApplicable("tick_rate_hz not configured")
    f = cfg.tick_rate_hz
    samples = [e for e in timer_events if e.kind is EventKind.TIMER_SAMPLE]
    if not samples:
        raise NotApplicable("no timer samples")
    samples.sort(key=lambda e: e.sort_key())

    violations: list[tuple[int, NormalizedEvent, Fraction]] = []
    for idx, ev in enumerate(samples):
        v = Fraction(ev.payload["seconds"])
        ticks = v * f
        frac = ticks - math.floor(ticks)
        dist = min(frac, 1 - frac)
        if dist > cfg.tick_epsilon:
            violations.append((idx, ev, ticks))

    flags: list[AnomalyFlag] = []
    if not violations:
        return flags
    # merge consecutive violating samples into single flags
    group: list[tuple[int, NormalizedEvent, Fraction]] = [violations[0]]
    for item in violations[1:]:
        if item[0] == group[-1][0] + 1:
            group.append(item)
        else:
            flags.append(_tick_flag(cfg, f, group))
            group = [item]
    flags.append(_tick_flag(cfg, f, group))
    return flags


def _tick_flag(cfg: DetectorConfig, f: Fraction, group: list[tuple[int, NormalizedEvent, Fraction]]) -> AnomalyFlag:
    _, first, ticks = group[0]
    last = group[-1][1]
    return _flag(
        cfg, "cyber.tick_misaligned", first.t, last.t,
        0.3 + len(group) / 20.0,
        {"tick_rate": f"{f.numerator}/{f.denominator}", "count": len(group),
         "first_value": str(first.payload["seconds"]),
         "first_value_ticks": float(ticks)},
        f"{len(group)} timer value(s) off the {f} Hz tick grid "
        f"(first: {float(Fraction(first.payload['seconds']))} s)",
    )


# --- periodic-event phase ------------------------------------------------------------------

def periodic_phase_check(
    events: Sequence[NormalizedEvent], period_ms: float, tolerance_ms: float,
    cfg: DetectorConfig,
) -> list[AnomalyFlag]:
    """Check engine-periodic events for phase outliers and persistent phase steps.

    The reference phase is the circular mean over a leading stable window.  A
    single residual beyond tolerance is an outlier; three or more consecutive
    outliers agreeing on a new phase mark a splice candidate at the step.
    """
    if period_ms <= 0:
        raise ValueError("period must be positive")
    evs = sorted(events, key=lambda e: e.sort_key())
    if len(evs) < 3:
        raise NotApplicable("fewer than 3 periodic events")
    period_us = round(period_ms * 1000)
    tol_us = round(tolerance_ms * 1000)

    def circ_mean(ts: Sequence[Micros]) -> float:
        angles = [2 * math.pi * (t % period_us) / period_us for t in ts]
        s = sum(math.sin(a) for a in angles)
        c = sum(math.cos(a) for a in angles)
        return (math.atan2(s, c) % (2 * math.pi)) / (2 * math.pi) * period_us

    def circ_resid(t: Micros, phase: float) -> float:
        r = (t - phase) % period_us
        return r if r <= period_us / 2 else r - period_us

    lead = max(3, min(10, len(evs) // 4))
    phase = circ_mean([e.t for e in evs[:lead]])
    resids = [circ_resid(e.t, phase) for e in evs]
    outlier = [abs(r) > tol_us for r in resids]

    flags: list[AnomalyFlag] = []
    i = 0
    while i < len(evs):
        if not outlier[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(evs) and outlier[j + 1]:
            j += 1
        run = list(range(i, j + 1))
        if len(run) >= 3:
            new_phase = circ_mean([evs[r].t for r in run])
            spread = max(abs(circ_resid(evs[r].t, new_phase)) for r in run)
            if spread <= tol_us:
                step_ms = circ_resid(evs[run[0]].t, phase) / 1000.0
                flags.append(
                    _flag(
                        cfg, "cyber.phase_step", evs[run[0]].t, evs[run[-1]].t,
                        0.5 + 0.05 * len(run),
                        {"period_ms": period_ms, "step_ms": step_ms,
                         "run_length": len(run), "phase_spread_us": spread},
                        f"periodic phase steps by {step_ms:.1f} ms for {len(run)} events",
                    )
                )
                i = j + 1
                continue
        for r in run:
            resid_ms = resids[r] / 1000.0
            flags.append(
                _flag(
                    cfg, "cyber.phase_outlier", evs[r].t, evs[r].t,
                    clamp01(0.2 + 0.1 * abs(resids[r]) / max(tol_us, 1)),
                    {"period_ms": period_ms, "residual_ms": resid_ms},
                    f"periodic event off phase by {resid_ms:.1f} ms",
                )
            )
        i = j + 1
    return flags


def periodic_phase_sweep(
    events: Sequence[NormalizedEvent], cfg: DetectorConfig
) -> list[AnomalyFlag]:
    """Run the phase check for every configured periodic-event spec."""
    if not cfg.periodic_events:
        raise NotApplicable("no periodic events configured")
    flags: list[AnomalyFlag] = []
    matched_any = False
    for spec in cfg.periodic_events:
        selected = [
            e for e in events
            if e.kind.value == spec.kind and (spec.name is None or e.payload.get("name") == spec.name)
        ]
        if len(selected) < 3:
            continue
        matched_any = True
        flags.extend(periodic_phase_check(selected, spec.period_ms, spec.tolerance_ms, cfg))
    if not matched_any:
        raise NotApplicable("no stream matches any periodic-event spec")
    return flags


# --- game-state transition rules ---------------------------------------------------------------

def state_transition_check(
    events: Sequence[NormalizedEvent], cfg: DetectorConfig
) -> tuple[list[AnomalyFlag], list[str]]:
    """Validate GameStateChange events against declarative per-counter rules."""
    changes = [e for e in events if e.kind is EventKind.GAME_STATE_CHANGE]
    if not cfg.state_rules:
        raise NotApplicable("no state rules configured")
    if not changes:
        raise NotApplicable("no game-state changes observed")
    rules = {r.name: r for r in cfg.state_rules}

    notes: list[str] = []
    uncovered: set[str] = set()
    seen_values: dict[str, set[Any]] = {}
    last: dict[str, tuple[Micros, Any]] = {}
    flags: list[AnomalyFlag] = []

    def numeric(v: Any) -> Optional[float]:
        if isinstance(v, bool):
            return None
        if isinstance(v, (int, float, Fraction)):
            return float(v)
        return None

    for ev in sorted(changes, key=lambda e: e.sort_key()):
        name = str(ev.payload["name"])
        old, new = ev.payload["old"], ev.payload["new"]
        seen_values.setdefault(name, set()).add(_hashable(new))
        rule = rules.get(name)
        if rule is None:
            uncovered.add(name)
            last[name] = (ev.t, new)
            continue
        n_old, n_new = numeric(old), numeric(new)
        if rule.monotone and n_old is not None and n_new is not None and n_new < n_old:
            flags.append(
                _flag(cfg, "cyber.state_rule", ev.t, ev.t, 0.8,
                      {"name": name, "old": _jsonable(old), "new": _jsonable(new), "violation": "monotone"},
                      f"monotone counter '{name}' decreased: {old} -> {new}")
            )
        if rule.max_delta_per_s is not None and n_new is not None:
            prev = last.get(name)
            if prev is not None:
                prev_t, prev_v = prev
                pn = numeric(prev_v)
                dt_s = (ev.t - prev_t) / 1e6
                if pn is not None and dt_s > 0:
                    rate = abs(n_new - pn) / dt_s
                    if rate > rule.max_delta_per_s:
                        flags.append(
                            _flag(cfg, "cyber.state_rule", prev_t, ev.t, 0.7,
                                  {"name": name, "rate_per_s": rate,
                                   "limit_per_s": rule.max_delta_per_s, "violation": "rate"},
                                  f"counter '{name}' changed at {rate:.1f}/s "
                                  f"(limit {rule.max_delta_per_s:g}/s)")
                        )
        if rule.allowed_values is not None and _hashable(new) not in set(map(_hashable, rule.allowed_values)):
            flags.append(
                _flag(cfg, "cyber.state_rule", ev.t, ev.t, 0.7,
                      {"name": name, "new": _jsonable(new), "violation": "allowed_values"},
                      f"counter '{name}' entered disallowed value {new!r}")
            )
        if rule.requires is not None and new != old:
            req_name, req_value = rule.requires
            if _hashable(req_value) not in seen_values.get(req_name, set()):
                flags.append(
                    _flag(cfg, "cyber.state_rule", ev.t, ev.t, 0.8,
                          {"name": name, "requires": [req_name, _jsonable(req_value)],
                           "violation": "requires"},
                          f"'{name}' changed before '{req_name}' reached {req_value!r}")
                )
        last[name] = (ev.t, new)

    if uncovered:
        notes.append("uncovered counters: " + ", ".join(sorted(uncovered)))
    return flags, notes


def _hashable(v: Any) -> Any:
    return str(v) if isinstance(v, Fraction) else v


def _jsonable(v: Any) -> Any:
    return float(v) if isinstance(v, Fraction) else v
