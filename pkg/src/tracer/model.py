"""Shared domain types: the master time axis, events, flags and case bundles.

Everything downstream (parsers, detectors, verdict synthesis) trades in these
value objects.  They are immutable after construction; revisions of a case are
whole new bundles, never in-place edits.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

# Master clock: integer microseconds.  File formats speak milliseconds (reals);
# conversion rounds half-to-even so repeated ingest is bit-stable.
Micros = int


def ms_to_us(ms: float | int | str | Fraction) -> Micros:
    """Convert a millisecond value (exactly, via rationals) to integer microseconds."""
    if isinstance(ms, Fraction):
        return round(ms * 1000)
    if isinstance(ms, str):
        return round(Fraction(ms) * 1000)
    return round(Fraction(ms) * 1000)


def us_to_ms(us: Micros) -> Fraction:
    return Fraction(us, 1000)


class Domain(enum.Enum):
    PHYSICAL = "Physical"
    HCI_INTERFACE = "HciInterface"
    CYBERSPACE = "Cyberspace"


class Subdomain(enum.Enum):
    PHYSIOLOGICAL_LIMITS = "PhysiologicalLimits"
    HARDWARE_CONSTRAINTS = "HardwareConstraints"
    PHYSICAL_LAW = "PhysicalLaw"
    INPUT_CHANNEL = "InputChannel"
    OUTPUT_CHANNEL = "OutputChannel"
    IN_GAME_DATA = "InGameData"
    IN_GAME_LOGIC = "InGameLogic"
    RENDERING = "Rendering"


SUBDOMAINS_OF: dict[Domain, frozenset[Subdomain]] = {
    Domain.PHYSICAL: frozenset(
        {Subdomain.PHYSIOLOGICAL_LIMITS, Subdomain.HARDWARE_CONSTRAINTS, Subdomain.PHYSICAL_LAW}
    ),
    Domain.HCI_INTERFACE: frozenset({Subdomain.INPUT_CHANNEL, Subdomain.OUTPUT_CHANNEL}),
    Domain.CYBERSPACE: frozenset(
        {Subdomain.IN_GAME_DATA, Subdomain.IN_GAME_LOGIC, Subdomain.RENDERING}
    ),
}


@dataclass(frozen=True)
class DomainTag:
    """Forensic domain attribution of a single event."""

    domain: Domain
    subdomain: Subdomain

    def __post_init__(self) -> None:
        if self.subdomain not in SUBDOMAINS_OF[self.domain]:
            raise ValueError(
                f"subdomain {self.subdomain.value} is not part of domain {self.domain.value}"
            )

    def as_wire(self) -> dict[str, str]:
        return {"domain": self.domain.value, "subdomain": self.subdomain.value}

    @classmethod
    def from_wire(cls, doc: Mapping[str, str]) -> "DomainTag":
        return cls(Domain(doc["domain"]), Subdomain(doc["subdomain"]))


class EventKind(enum.Enum):
    INPUT_PRESS = "InputPress"
    INPUT_RELEASE = "InputRelease"
    STIMULUS_SHOWN = "StimulusShown"
    GAME_STATE_CHANGE = "GameStateChange"
    TIMER_SAMPLE = "TimerSample"
    AUDIO_TRANSIENT = "AudioTransient"
    FRAME_FEATURE = "FrameFeature"
    HAND_ACTIVITY = "HandActivity"
    PROCEDURAL_OUTCOME = "ProceduralOutcome"


# Required payload keys per event kind (extra keys are preserved verbatim).
PAYLOAD_SCHEMA: dict[EventKind, tuple[str, ...]] = {
    EventKind.INPUT_PRESS: ("key",),
    EventKind.INPUT_RELEASE: ("key",),
    EventKind.STIMULUS_SHOWN: ("stimulus_id",),
    EventKind.GAME_STATE_CHANGE: ("name", "old", "new"),
    EventKind.TIMER_SAMPLE: ("seconds",),
    EventKind.AUDIO_TRANSIENT: ("amplitude", "ratio"),
    EventKind.FRAME_FEATURE: ("frame_idx",),
    EventKind.HAND_ACTIVITY: ("state",),
    EventKind.PROCEDURAL_OUTCOME: ("trial", "success"),
}


@dataclass(frozen=True)
class NormalizedEvent:
    """One timestamped observation on the master clock.

    ``payload`` keys follow the per-kind schema in :data:`PAYLOAD_SCHEMA`;
    numeric payload values parsed from files are exact rationals so that
    engine-timing checks never inherit float error.
    """

    id: str
    t: Micros
    stream: str
    kind: EventKind
    payload: Mapping[str, Any]
    domain: Optional[DomainTag] = None
    src_line: Optional[int] = None

    def sort_key(self) -> tuple[Micros, str, str]:
        return (self.t, self.stream, self.id)

    def with_domain(self, tag: DomainTag) -> "NormalizedEvent":
        return replace(self, domain=tag)


def sort_events(events: Iterable[NormalizedEvent]) -> list[NormalizedEvent]:
    """Total order: time, then (stream, id) so reports are reproducible."""
    return sorted(events, key=NormalizedEvent.sort_key)


class Module(enum.Enum):
    PHYSICS = "Physics"
    MEDIA = "Media"
    CYBER = "Cyber"


class Severity(enum.IntEnum):
    INFO = 0
    SUSPECT = 1
    CRITICAL = 2

    @property
    def label(self) -> str:
        return {0: "Info", 1: "Suspect", 2: "Critical"}[int(self)]

    @classmethod
    def from_label(cls, label: str) -> "Severity":
        return {"Info": cls.INFO, "Suspect": cls.SUSPECT, "Critical": cls.CRITICAL}[label]


def severity_for(score: float, thresholds: tuple[float, float]) -> Severity:
    """Map a score in [0,1] to a severity band; monotone in the score."""
    t1, t2 = thresholds
    if score >= t2:
        return Severity.CRITICAL
    if score >= t1:
        return Severity.SUSPECT
    return Severity.INFO


@dataclass(frozen=True)
class AnomalyFlag:
    """One detector finding over a time interval."""

    id: str
    rule_id: str
    module: Module
    t_start: Micros
    t_end: Micros
    severity: Severity
    score: float
    evidence: Mapping[str, Any]
    message: str

    def __post_init__(self) -> None:
        if self.t_start > self.t_end:
            raise ValueError("flag interval start exceeds end")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"flag score {self.score} outside [0,1]")

    def with_id(self, new_id: str) -> "AnomalyFlag":
        return replace(self, id=new_id)


class AnnotationAction(enum.Enum):
    ACCEPT = "Accept"
    DISMISS = "Dismiss"


@dataclass(frozen=True)
class Annotation:
    """A moderator ruling on a single flag."""

    flag_id: str
    action: AnnotationAction
    note: str
    author: str
    t_wall: str  # ISO-8601, informational only


@dataclass
class CaseBundle:
    """Everything known about one submission under review.

    Mutation discipline: the pipeline and service always build a new bundle
    (or extend the annotation list) and persist it as a fresh store revision;
    detectors only ever read.
    """

    case_id: str
    manifest: Mapping[str, Any]
    events: list[NormalizedEvent] = field(default_factory=list)
    frames: list[Any] = field(default_factory=list)  # ingest.FrameFeature
    audio: dict[str, Any] = field(default_factory=dict)  # stream -> ingest.AudioBuffer
    flags: list[AnomalyFlag] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    alignments: list[Any] = field(default_factory=list)  # timeline.AlignmentEstimate
    coverage: dict[str, dict[str, str]] = field(default_factory=dict)
    verdict: Optional[Any] = None  # verdict.VerdictReport

    def events_of(self, *kinds: EventKind) -> list[NormalizedEvent]:
        wanted = set(kinds)
        return [e for e in self.events if e.kind in wanted]

    def dismissed_flag_ids(self) -> set[str]:
        """Flag ids whose latest annotation is a dismissal."""
        state: dict[str, AnnotationAction] = {}
        for ann in self.annotations:
            state[ann.flag_id] = ann.action
        return {fid for fid, act in state.items() if act is AnnotationAction.DISMISS}

    def active_flags(self) -> list[AnomalyFlag]:
        dismissed = self.dismissed_flag_ids()
        return [f for f in self.flags if f.id not in dismissed]


class NotApplicable(Exception):
    """Raised by a detector whose evidence preconditions are not met.

    The pipeline records the reason in the report coverage table instead of
    emitting flags.
    """

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x
