"""Verdict synthesis: collate flags and moderator annotations into a report.

Scores aggregate by noisy-OR (1 - prod(1 - s_i)): several weak independent
signals compound but never exceed 1.  Dismissed flags contribute nothing, so
a fully dismissed roster classifies Clean.  Reports without a moderator block
are stamped machine-only rather than presented as final rulings.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import __version__
from .config import DetectorConfig
from .model import (
    AnnotationAction,
    Annotation,
    AnomalyFlag,
    CaseBundle,
    Module,
    Severity,
)

SCHEMA_VERSION = 1
MACHINE_ONLY_BANNER = "MACHINE-ONLY - pending analytical review"


class Classification(enum.Enum):
    CLEAN = "Clean"
    INCONCLUSIVE = "Inconclusive"
    SUSPICIOUS = "Suspicious"
    MANIPULATED = "Manipulated"


@dataclass(frozen=True)
class ModeratorDecision:
    author: str
    decision: str
    note: str
    t_wall: str


@dataclass
class VerdictReport:
    case_id: str
    config_hash: str
    per_module_scores: dict[str, float]
    classification: Classification
    rationale: str
    coverage: dict[str, dict[str, str]]
    moderator: Optional[ModeratorDecision] = None

    @property
    def machine_only(self) -> bool:
        return self.moderator is None


def _dismissed_ids(annotations: Iterable[Annotation]) -> set[str]:
    state: dict[str, AnnotationAction] = {}
    for ann in annotations:
        state[ann.flag_id] = ann.action
    return {fid for fid, act in state.items() if act is AnnotationAction.DISMISS}


def score_module(flags: Sequence[AnomalyFlag], annotations: Sequence[Annotation] = ()) -> float:
    """Noisy-OR aggregation over non-dismissed flags of one module."""
    dismissed = _dismissed_ids(annotations)
    prod = 1.0
    for flag in flags:
        if flag.id in dismissed:
            continue
        prod *= 1.0 - flag.score
    return 1.0 - prod


def classify(
    per_module_scores: Mapping[str, float],
    flags: Sequence[AnomalyFlag],
    annotations: Sequence[Annotation],
    cfg: DetectorConfig,
    coverage: Optional[Mapping[str, Mapping[str, str]]] = None,
) -> Classification:
    """Four-way classification from scores, active flags and detector coverage."""
    dismissed = _dismissed_ids(annotations)
    active_critical = any(
        f.severity is Severity.CRITICAL and f.id not in dismissed for f in flags
    )
    if active_critical:
        return Classification.MANIPULATED
    max_score = max(per_module_scores.values(), default=0.0)
    if max_score >= cfg.suspicious_score:
        return Classification.SUSPICIOUS
    any_gap = any(
        entry.get("status") in ("not_applicable", "failed")
        for entry in (coverage or {}).values()
    )
    if any_gap and 0.0 < max_score < cfg.suspicious_score:
        return Classification.INCONCLUSIVE
    return Classification.CLEAN


def build_verdict(bundle: CaseBundle, cfg: DetectorConfig) -> VerdictReport:
    scores: dict[str, float] = {}
    for module in Module:
        module_flags = [f for f in bundle.flags if f.module is module]
        scores[module.value] = score_module(module_flags, bundle.annotations)
    classification = classify(scores, bundle.flags, bundle.annotations, cfg, bundle.coverage)
    moderator = bundle.verdict.moderator if isinstance(bundle.verdict, VerdictReport) else None
    report = VerdictReport(
        case_id=bundle.case_id,
        config_hash=cfg.config_hash,
        per_module_scores=scores,
        classification=classification,
        rationale=_rationale(bundle, scores, classification),
        coverage=dict(bundle.coverage),
        moderator=moderator,
    )
    return report


def _rationale(bundle: CaseBundle, scores: Mapping[str, float], classification: Classification) -> str:
    dismissed = bundle.dismissed_flag_ids()
    active = [f for f in bundle.flags if f.id not in dismissed]
    if not active:
        suffix = " after moderator dismissals" if bundle.flags else ""
        return f"no active findings{suffix}; classification {classification.value}"
    by_rule: dict[str, int] = {}
    for f in active:
        by_rule[f.rule_id] = by_rule.get(f.rule_id, 0) + 1
    criticals = sum(1 for f in active if f.severity is Severity.CRITICAL)
    rules = ", ".join(f"{rule} x{count}" for rule, count in sorted(by_rule.items()))
    top = max(scores.items(), key=lambda kv: kv[1])
    return (
        f"{len(active)} active finding(s) ({criticals} critical): {rules}; "
        f"highest module score {top[0]}={top[1]:.3f}; classification {classification.value}"
    )


# --- rendering ------------------------------------------------------------------------

def _json_safe(value: Any) -> Any:
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, Mapping):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if hasattr(value, "item") and callable(value.item) and not isinstance(value, (str, bytes)):
        try:
            return value.item()  # numpy scalars
        except Exception:
            return str(value)
    return value


def report_document(bundle: CaseBundle, cfg: DetectorConfig) -> dict[str, Any]:
    """The canonical structured report (service/UI contract)."""
    report: VerdictReport = bundle.verdict if isinstance(bundle.verdict, VerdictReport) else build_verdict(bundle, cfg)
    dismissed = bundle.dismissed_flag_ids()
    latest_ann: dict[str, Annotation] = {}
    for ann in bundle.annotations:
        latest_ann[ann.flag_id] = ann
    flags_doc = []
    for f in bundle.flags:
        ann = latest_ann.get(f.id)
        flags_doc.append(
            {
                "id": f.id,
                "rule_id": f.rule_id,
                "module": f.module.value,
                "interval_us": [f.t_start, f.t_end],
                "severity": f.severity.label,
                "score": f.score,
                "message": f.message,
                "evidence": _json_safe(f.evidence),
                "dismissed": f.id in dismissed,
                "annotation": None if ann is None else {
                    "action": ann.action.value, "note": ann.note,
                    "author": ann.author, "t_wall": ann.t_wall,
                },
            }
        )
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "tracer", "version": __version__},
        "case_id": bundle.case_id,
        "config_hash": report.config_hash,
        "classification": report.classification.value,
        "machine_only": report.machine_only,
        "banner": MACHINE_ONLY_BANNER if report.machine_only else None,
        "rationale": report.rationale,
        "per_module_scores": report.per_module_scores,
        "coverage": report.coverage,
        "flags": flags_doc,
        "alignments": [a.as_wire() for a in bundle.alignments],
        "annotations": [
            {"flag_id": a.flag_id, "action": a.action.value, "note": a.note,
             "author": a.author, "t_wall": a.t_wall}
            for a in bundle.annotations
        ],
        "moderator": None if report.moderator is None else {
            "author": report.moderator.author, "decision": report.moderator.decision,
            "note": report.moderator.note, "t_wall": report.moderator.t_wall,
        },
        "warnings": list(bundle.warnings),
        "event_count": len(bundle.events),
    }
    fixture = bundle.manifest.get("fixture") if isinstance(bundle.manifest, Mapping) else None
    if fixture:
        doc["fixture"] = _json_safe(fixture)
    return doc


def render_report(bundle: CaseBundle, cfg: DetectorConfig, format: str = "json") -> bytes:
    """Deterministic serialization: equal bundle + config give identical bytes."""
    doc = report_document(bundle, cfg)
    if format == "json":
        return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")
    if format == "md":
        return _render_markdown(doc).encode("utf-8")
    raise ValueError(f"unknown report format: {format}")


def _render_markdown(doc: Mapping[str, Any]) -> str:
    lines = [
        f"# Case report: {doc['case_id']}",
        "",
        f"- classification: **{doc['classification']}**",
        f"- tool: {doc['tool']['name']} {doc['tool']['version']}",
        f"- config: `{doc['config_hash']}`",
    ]
    if doc.get("banner"):
        lines.append(f"- status: **{doc['banner']}**")
    if doc.get("fixture"):
        lines.append(f"- fixture taxonomy: {doc['fixture'].get('taxonomy', 'unknown')}")
    lines += ["", f"_{doc['rationale']}_", "", "## Module scores", ""]
    for module, score in sorted(doc["per_module_scores"].items()):
        lines.append(f"- {module}: {score:.4f}")
    lines += ["", "## Detector coverage", "", "| detector | status | detail |", "|---|---|---|"]
    for name, entry in sorted(doc["coverage"].items()):
        lines.append(f"| {name} | {entry.get('status', '?')} | {entry.get('detail', '')} |")
    lines += ["", f"## Flags ({len(doc['flags'])})", ""]
    if not doc["flags"]:
        lines.append("(none)")
    for f in doc["flags"]:
        state = " [dismissed]" if f["dismissed"] else ""
        t0, t1 = f["interval_us"]
        lines.append(
            f"- `{f['id']}` **{f['severity']}** {f['rule_id']} "
            f"({t0 / 1e6:.3f}s - {t1 / 1e6:.3f}s, score {f['score']:.3f}){state}: {f['message']}"
        )
    if doc["alignments"]:
        lines += ["", "## Stream alignment", ""]
        for a in doc["alignments"]:
            lines.append(
                f"- {a['stream']}: drift {a['drift_rate']:.6f}, offset {a['offset_us'] / 1000:.2f} ms, "
                f"residual {a['residual_rms_us'] / 1000:.2f} ms over {a['n_pairs']} pairs"
            )
    if doc["annotations"]:
        lines += ["", "## Annotations", ""]
        for a in doc["annotations"]:
            lines.append(f"- {a['flag_id']}: {a['action']} by {a['author']} ({a['note']})")
    if doc["moderator"]:
        m = doc["moderator"]
        lines += ["", "## Moderator verdict", "", f"- {m['decision']} by {m['author']}: {m['note']}"]
    if doc["warnings"]:
        lines += ["", "## Ingest warnings", ""]
        for w in doc["warnings"]:
            lines.append(f"- {w}")
    return "\n".join(lines) + "\n"
