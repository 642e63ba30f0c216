"""Detector configuration: thresholds, engine timing, PRNG models, state rules.

All knobs live in one versioned document so a report can state exactly which
configuration produced it.  The canonical JSON serialization is hashed into
every report header; equal configs hash equal, any field change re-hashes.

Exactness policy: quantities that feed exact arithmetic (tick rate, PRNG
success probabilities, alpha) are rationals; plain thresholds are floats.
Config files are JSON; decimal literals are parsed exactly, and rationals may
also be written as strings like "1/10".
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence, Union


@dataclass(frozen=True)
class PeriodicEventSpec:
    """An engine-driven event expected on a fixed period (e.g. idle blinks)."""

    name: str
    period_ms: float
    tolerance_ms: float
    kind: str = "GameStateChange"


@dataclass(frozen=True)
class BernoulliModel:
    """Known internal success rate for one kind of repeated trial."""

    name: str
    trial: str
    p: Fraction
    description: str = ""


@dataclass(frozen=True)
class LcgModel:
    """Linear congruential generator with a thresholded output map.

    For a seed s0, trial i observes success iff
    ``((s_i >> out_shift) % out_mod) < out_threshold`` where
    ``s_i = (multiplier * s_{i-1} + increment) mod modulus``.
    """

    name: str
    trial: str
    modulus: int
    multiplier: int
    increment: int
    out_shift: int
    out_mod: int
    out_threshold: int
    seed_space: tuple[int, int] = (0, 1 << 20)  # [lo, hi)
    description: str = ""


PrngModel = Union[BernoulliModel, LcgModel]


@dataclass(frozen=True)
class StateRule:
    """Declarative consistency rule for one game-state counter."""

    name: str
    monotone: bool = False
    max_delta_per_s: Optional[float] = None
    allowed_values: Optional[tuple[Any, ...]] = None
    requires: Optional[tuple[str, Any]] = None  # (counter, value seen earlier)


@dataclass(frozen=True)
class DetectorConfig:
    # Human and hardware limits
    reaction_floor_ms: float = 100.0
    typical_reaction_range_ms: tuple[float, float] = (150.0, 300.0)
    max_simultaneous_inputs: int = 10
    device_rollover_limit: Optional[int] = None
    stimulus_window_ms: float = 2000.0
    anticipation_window_ms: float = 300.0
    response_keys: Optional[tuple[str, ...]] = None  # None: any key answers a stimulus
    min_repeats: int = 20
    sigma_floor_ms: float = 1.0

    # Audio
    hum_hz: float = 50.0
    hum_floor: float = 1e-4  # squared-amplitude presence threshold
    hum_window_s: float = 1.0
    transient_ratio: float = 8.0
    transient_refractory_ms: float = 30.0
    transient_min_peak: float = 0.01
    delta_threshold: float = 0.5
    quiet_rms: float = 0.1
    ambient_window_ms: float = 500.0
    ambient_rms_ratio: float = 3.0
    ambient_centroid_shift: float = 0.4
    ambient_persist_windows: int = 2

    # Video (frame features)
    cut_z: float = 8.0
    cut_trailing: int = 120
    mad_floor: float = 1e-4
    dup_run: int = 5

    # A/V alignment and playback rate
    max_pair_gap_ms: float = 80.0
    min_pairs: int = 10
    drift_tol: float = 5e-3
    resid_tol_ms: float = 15.0
    rate_tol: float = 0.02
    rate_window_s: float = 30.0

    # Engine timing
    tick_rate_hz: Optional[Fraction] = Fraction(60)
    tick_epsilon: Fraction = Fraction(0)
    periodic_events: tuple[PeriodicEventSpec, ...] = ()

    # PRNG plausibility
    prng_models: tuple[PrngModel, ...] = ()
    alpha: Fraction = Fraction(1, 10**6)
    correction_factor: Optional[int] = None  # None: trial kinds x session segments
    session_segments: int = 1
    max_bruteforce: int = 1 << 26

    # Game-state rules
    state_rules: tuple[StateRule, ...] = ()

    # Flag scoring / severity bands
    severity_thresholds: tuple[float, float] = (0.3, 0.7)
    rule_thresholds: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: {"physics.reaction_floor": (0.02, 0.2)}
    )
    suspicious_score: float = 0.5

    # Event attribution overrides: kind -> (domain, subdomain) wire names
    attribution: Mapping[str, tuple[str, str]] = field(default_factory=dict)
    master_stream: str = "input"

    def thresholds_for(self, rule_id: str) -> tuple[float, float]:
        return tuple(self.rule_thresholds.get(rule_id, self.severity_thresholds))  # type: ignore[return-value]

    @property
    def config_hash(self) -> str:
        return canonical_config_hash(self)


class ConfigError(ValueError):
    pass


def validate_config(cfg: DetectorConfig) -> list[str]:
    """Return one description per violated invariant; empty when valid."""
    problems: list[str] = []
    lo, hi = cfg.typical_reaction_range_ms
    if lo > hi:
        problems.append("typical_reaction_range low exceeds high")
    if cfg.reaction_floor_ms > lo:
        problems.append("reaction_floor exceeds range.low")
    if cfg.reaction_floor_ms <= 0:
        problems.append("reaction_floor must be positive")
    if cfg.max_simultaneous_inputs < 1:
        problems.append("max_simultaneous_inputs must be >= 1")
    if cfg.device_rollover_limit is not None and cfg.device_rollover_limit < 1:
        problems.append("device_rollover_limit must be >= 1")
    if cfg.tick_rate_hz is not None and cfg.tick_rate_hz <= 0:
        problems.append("tick_rate must be positive")
    if cfg.tick_epsilon < 0:
        problems.append("tick_epsilon must be >= 0")
    if cfg.hum_hz <= 0:
        problems.append("hum_hz must be positive")
    for spec in cfg.periodic_events:
        if spec.period_ms <= 0:
            problems.append(f"periodic event {spec.name}: period must be positive")
        if spec.tolerance_ms < 0:
            problems.append(f"periodic event {spec.name}: tolerance must be >= 0")
    for model in cfg.prng_models:
        if isinstance(model, BernoulliModel):
            if not (0 < model.p < 1):
                problems.append(f"prng model {model.name}: p must lie in (0,1)")
        else:
            if model.modulus <= 1:
                problems.append(f"prng model {model.name}: modulus must exceed 1")
            if not (0 <= model.seed_space[0] < model.seed_space[1]):
                problems.append(f"prng model {model.name}: empty seed space")
            if model.out_mod < 1 or not (0 <= model.out_threshold <= model.out_mod):
                problems.append(f"prng model {model.name}: bad output map")
            if model.multiplier * (model.modulus - 1) + model.increment >= 1 << 63:
                problems.append(f"prng model {model.name}: state arithmetic exceeds 63 bits")
    if not (0 < cfg.alpha < 1):
        problems.append("alpha must lie in (0,1)")
    t1, t2 = cfg.severity_thresholds
    if not (0 <= t1 <= t2 <= 1):
        problems.append("severity thresholds must satisfy 0 <= t1 <= t2 <= 1")
    for rule, (r1, r2) in cfg.rule_thresholds.items():
        if not (0 <= r1 <= r2 <= 1):
            problems.append(f"rule thresholds for {rule} must satisfy 0 <= t1 <= t2 <= 1")
    for name, tol in [
        ("max_pair_gap_ms", cfg.max_pair_gap_ms),
        ("resid_tol_ms", cfg.resid_tol_ms),
        ("transient_refractory_ms", cfg.transient_refractory_ms),
        ("sigma_floor_ms", cfg.sigma_floor_ms),
    ]:
        if tol < 0:
            problems.append(f"{name} must be >= 0")
    if cfg.dup_run < 2:
        problems.append("dup_run must be >= 2")
    if cfg.min_repeats < 2:
        problems.append("min_repeats must be >= 2")
    if cfg.max_bruteforce < 1:
        problems.append("max_bruteforce must be >= 1")
    return problems


# --- canonical serialization -------------------------------------------------

def _frac_wire(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


def _canonical_value(v: Any) -> Any:
    if isinstance(v, Fraction):
        return _frac_wire(v)
    if isinstance(v, (list, tuple)):
        return [_canonical_value(x) for x in v]
    if isinstance(v, Mapping):
        return {str(k): _canonical_value(x) for k, x in v.items()}
    if hasattr(v, "__dataclass_fields__"):
        doc = {f.name: _canonical_value(getattr(v, f.name)) for f in fields(v)}
        doc["$type"] = type(v).__name__
        return doc
    return v


def config_to_dict(cfg: DetectorConfig) -> dict[str, Any]:
    return {f.name: _canonical_value(getattr(cfg, f.name)) for f in fields(cfg)}


def canonical_config_hash(cfg: DetectorConfig) -> str:
    """SHA-256 of the canonical serialization; raises on invalid configs."""
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    doc = config_to_dict(cfg)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# --- config file parsing ------------------------------------------------------

def _as_fraction(v: Any) -> Fraction:
    # JSON numbers arrive as strings (parse_float=str) so decimals stay exact.
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(str(v))


def _as_float(v: Any) -> float:
    return float(Fraction(str(v))) if isinstance(v, str) else float(v)


def _parse_prng_model(doc: Mapping[str, Any]) -> PrngModel:
    kind = doc.get("kind", "Bernoulli" if "p" in doc else "Lcg")
    if kind == "Bernoulli":
        return BernoulliModel(
            name=doc["name"],
            trial=doc["trial"],
            p=_as_fraction(doc["p"]),
            description=doc.get("description", ""),
        )
    if kind == "Lcg":
        space = doc.get("seed_space", [0, 1 << 20])
        return LcgModel(
            name=doc["name"],
            trial=doc["trial"],
            modulus=int(doc["modulus"]),
            multiplier=int(doc["multiplier"]),
            increment=int(doc["increment"]),
            out_shift=int(doc.get("out_shift", 0)),
            out_mod=int(doc["out_mod"]),
            out_threshold=int(doc["out_threshold"]),
            seed_space=(int(space[0]), int(space[1])),
            description=doc.get("description", ""),
        )
    raise ConfigError(f"unknown prng model kind: {kind}")


def _parse_state_rule(doc: Mapping[str, Any]) -> StateRule:
    requires = doc.get("requires")
    return StateRule(
        name=doc["name"],
        monotone=bool(doc.get("monotone", False)),
        max_delta_per_s=_as_float(doc["max_delta_per_s"]) if doc.get("max_delta_per_s") is not None else None,
        allowed_values=tuple(doc["allowed_values"]) if doc.get("allowed_values") is not None else None,
        requires=(requires[0], requires[1]) if requires is not None else None,
    )


def config_from_dict(doc: Mapping[str, Any]) -> DetectorConfig:
    """Build a config from a parsed JSON tree; absent keys keep their defaults."""
    kw: dict[str, Any] = {}
    simple_floats = {
        "reaction_floor_ms", "stimulus_window_ms", "anticipation_window_ms",
        "sigma_floor_ms", "hum_hz", "hum_floor", "hum_window_s", "transient_ratio",
        "transient_refractory_ms", "transient_min_peak", "delta_threshold",
        "quiet_rms", "ambient_window_ms", "ambient_rms_ratio",
        "ambient_centroid_shift", "cut_z", "mad_floor", "max_pair_gap_ms",
        "drift_tol", "resid_tol_ms", "rate_tol", "rate_window_s", "suspicious_score",
    }
    simple_ints = {
        "max_simultaneous_inputs", "min_repeats", "ambient_persist_windows",
        "cut_trailing", "dup_run", "min_pairs", "session_segments", "max_bruteforce",
    }
    for key, value in doc.items():
        if key in simple_floats:
            kw[key] = _as_float(value)
        elif key in simple_ints:
            kw[key] = int(value)
        elif key == "typical_reaction_range_ms":
            kw[key] = (_as_float(value[0]), _as_float(value[1]))
        elif key == "device_rollover_limit":
            kw[key] = None if value is None else int(value)
        elif key == "response_keys":
            kw[key] = None if value is None else tuple(value)
        elif key == "tick_rate_hz":
            kw[key] = None if value is None else _as_fraction(value)
        elif key == "tick_epsilon":
            kw[key] = _as_fraction(value)
        elif key == "alpha":
            kw[key] = _as_fraction(value)
        elif key == "correction_factor":
            kw[key] = None if value is None else int(value)
        elif key == "periodic_events":
            kw[key] = tuple(
                PeriodicEventSpec(
                    name=d["name"],
                    period_ms=_as_float(d["period_ms"]),
                    tolerance_ms=_as_float(d["tolerance_ms"]),
                    kind=d.get("kind", "GameStateChange"),
                )
                for d in value
            )
        elif key == "prng_models":
            kw[key] = tuple(_parse_prng_model(d) for d in value)
        elif key == "state_rules":
            kw[key] = tuple(_parse_state_rule(d) for d in value)
        elif key == "severity_thresholds":
            kw[key] = (_as_float(value[0]), _as_float(value[1]))
        elif key == "rule_thresholds":
            kw[key] = {r: (_as_float(t[0]), _as_float(t[1])) for r, t in value.items()}
        elif key == "attribution":
            kw[key] = {k: (v[0], v[1]) for k, v in value.items()}
        elif key == "master_stream":
            kw[key] = str(value)
        elif key == "schema_version":
            pass
        else:
            raise ConfigError(f"unknown config key: {key}")
    return DetectorConfig(**kw)


def load_config(path: str) -> DetectorConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh, parse_float=str)
    cfg = config_from_dict(doc)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))
    return cfg


def dump_config(cfg: DetectorConfig) -> str:
    """Render the full config (all fields, defaults included) as JSON text."""
    doc = {"schema_version": 1, **config_to_dict(cfg)}
    return json.dumps(doc, sort_keys=True, indent=2)


def save_config(cfg: DetectorConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg) + "\n")
