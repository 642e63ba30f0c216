"""Event attribution and cross-stream clock alignment.

The alignment model is deliberately rigid: a single offset + drift per stream
pair, fitted by least squares over greedily matched nearest-neighbour event
pairs.  Piecewise alignment would absorb exactly the splice discontinuities
the media-continuity detectors are meant to expose, so residual spikes are a
feature, not a fitting failure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import DetectorConfig
from .model import Domain, DomainTag, EventKind, Micros, NormalizedEvent, Subdomain


@dataclass(frozen=True)
class AlignmentEstimate:
    """Affine relation t_anchor ~= drift_rate * t_candidate + offset_us."""

    stream: str
    offset_us: int
    drift_rate: float
    residual_rms_us: float
    n_pairs: int

    @classmethod
    def identity(cls, stream: str, n_pairs: int = 0) -> "AlignmentEstimate":
        return cls(stream=stream, offset_us=0, drift_rate=1.0, residual_rms_us=0.0, n_pairs=n_pairs)

    def apply(self, t_candidate: Micros) -> Micros:
        return round(self.drift_rate * t_candidate + self.offset_us)

    def as_wire(self) -> dict:
        return {
            "stream": self.stream,
            "offset_us": self.offset_us,
            "drift_rate": self.drift_rate,
            "residual_rms_us": self.residual_rms_us,
            "n_pairs": self.n_pairs,
        }


def _times(events: Sequence[NormalizedEvent] | Sequence[int]) -> np.ndarray:
    if len(events) and isinstance(events[0], NormalizedEvent):
        return np.array([e.t for e in events], dtype=np.float64)  # type: ignore[union-attr]
    return np.asarray(events, dtype=np.float64)


def match_pairs(
    anchor_ts: np.ndarray, candidate_ts: np.ndarray, max_gap_us: float
) -> list[tuple[int, int]]:
    """One-to-one greedy matching by ascending |gap| within the gap limit."""
    if len(anchor_ts) == 0 or len(candidate_ts) == 0:
        return []
    order = np.searchsorted(anchor_ts, candidate_ts)
    proposals: list[tuple[float, int, int]] = []
    for ci, pos in enumerate(order):
        for ai in (pos - 1, pos):
            if 0 <= ai < len(anchor_ts):
                gap = abs(float(candidate_ts[ci] - anchor_ts[ai]))
                if gap <= max_gap_us:
                    proposals.append((gap, ai, ci))
    proposals.sort()
    used_a: set[int] = set()
    used_c: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for _gap, ai, ci in proposals:
        if ai in used_a or ci in used_c:
            continue
        used_a.add(ai)
        used_c.add(ci)
        pairs.append((ai, ci))
    pairs.sort()
    return pairs


def estimate_alignment(
    anchor_events: Sequence[NormalizedEvent] | Sequence[int],
    candidate_events: Sequence[NormalizedEvent] | Sequence[int],
    max_pair_gap_ms: float = 80.0,
    stream: str = "",
) -> AlignmentEstimate:
    """Least-squares fit of the candidate stream's clock against the anchor's.

    Returns the identity estimate (flagged by ``n_pairs < 2``) when fewer than
    two pairs can be matched; degenerate inputs never raise.
    """
    a = _times(anchor_events)
    c = _times(candidate_events)
    pairs = match_pairs(a, c, max_pair_gap_ms * 1000.0)
    if len(pairs) < 2:
        return AlignmentEstimate.identity(stream, n_pairs=len(pairs))
    ai = np.array([p[0] for p in pairs])
    ci = np.array([p[1] for p in pairs])
    ya = a[ai]
    xc = c[ci]
    # centre for conditioning; drift = cov/var on the matched pairs
    xm = xc.mean()
    ym = ya.mean()
    dx = xc - xm
    dy = ya - ym
    var = float(np.dot(dx, dx))
    if var == 0.0:
        return AlignmentEstimate.identity(stream, n_pairs=len(pairs))
    drift = float(np.dot(dx, dy) / var)
    offset = float(ym - drift * xm)
    resid = ya - (drift * xc + offset)
    rms = float(np.sqrt(np.mean(resid * resid)))
    return AlignmentEstimate(
        stream=stream,
        offset_us=round(offset),
        drift_rate=drift,
        residual_rms_us=rms,
        n_pairs=len(pairs),
    )


# --- domain attribution ---------------------------------------------------------

DEFAULT_ATTRIBUTION: dict[EventKind, DomainTag] = {
    EventKind.INPUT_PRESS: DomainTag(Domain.PHYSICAL, Subdomain.PHYSIOLOGICAL_LIMITS),
    EventKind.INPUT_RELEASE: DomainTag(Domain.PHYSICAL, Subdomain.PHYSIOLOGICAL_LIMITS),
    EventKind.HAND_ACTIVITY: DomainTag(Domain.PHYSICAL, Subdomain.PHYSICAL_LAW),
    EventKind.AUDIO_TRANSIENT: DomainTag(Domain.HCI_INTERFACE, Subdomain.INPUT_CHANNEL),
    EventKind.FRAME_FEATURE: DomainTag(Domain.HCI_INTERFACE, Subdomain.OUTPUT_CHANNEL),
    EventKind.GAME_STATE_CHANGE: DomainTag(Domain.CYBERSPACE, Subdomain.IN_GAME_DATA),
    EventKind.TIMER_SAMPLE: DomainTag(Domain.CYBERSPACE, Subdomain.IN_GAME_DATA),
    EventKind.PROCEDURAL_OUTCOME: DomainTag(Domain.CYBERSPACE, Subdomain.IN_GAME_LOGIC),
    EventKind.STIMULUS_SHOWN: DomainTag(Domain.CYBERSPACE, Subdomain.RENDERING),
}


class AttributionError(ValueError):
    pass


def attribution_table(cfg: Optional[DetectorConfig] = None) -> dict[EventKind, DomainTag]:
    table = dict(DEFAULT_ATTRIBUTION)
    if cfg is not None:
        for kind_name, (dom, sub) in cfg.attribution.items():
            table[EventKind(kind_name)] = DomainTag(Domain(dom), Subdomain(sub))
    return table


def attribute_events(
    events: Iterable[NormalizedEvent], cfg: Optional[DetectorConfig] = None
) -> list[NormalizedEvent]:
    """Assign each event its forensic domain; total over known kinds, idempotent."""
    table = attribution_table(cfg)
    out: list[NormalizedEvent] = []
    for ev in events:
        tag = table.get(ev.kind)
        if tag is None:
            raise AttributionError(f"no domain attribution for event kind '{ev.kind}'")
        out.append(ev.with_domain(tag))
    return out
