"""File-backed, revisioned case store.

Cases are evidence: every revision is an immutable directory holding the
bundle document, the rendered reports and a config snapshot.  The LATEST
pointer is updated by write-new-then-rename, so a crash between writing a
revision and committing the pointer leaves the previous revision fully
readable.  One writer per case (lock file); any number of readers.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping, Optional

from .config import DetectorConfig, config_from_dict, dump_config
from .model import (
    Annotation,
    AnnotationAction,
    AnomalyFlag,
    CaseBundle,
    DomainTag,
    EventKind,
    Module,
    NormalizedEvent,
    Severity,
)
from .timeline import AlignmentEstimate
from .verdict import (
    Classification,
    ModeratorDecision,
    VerdictReport,
    render_report,
)

BUNDLE_SCHEMA_VERSION = 1


class StoreError(RuntimeError):
    pass


class CaseBusyError(StoreError):
    pass


# --- bundle (de)serialization -----------------------------------------------------

def _enc_payload(value: Any) -> Any:
    if isinstance(value, Fraction):
        return {"$frac": [value.numerator, value.denominator]}
    if isinstance(value, Mapping):
        return {str(k): _enc_payload(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_enc_payload(v) for v in value]
    return value


def _dec_payload(value: Any) -> Any:
    if isinstance(value, dict):
        if set(value.keys()) == {"$frac"}:
            num, den = value["$frac"]
            return Fraction(num, den)
        return {k: _dec_payload(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_dec_payload(v) for v in value]
    return value


def bundle_to_doc(bundle: CaseBundle, manifest_path: Optional[str] = None) -> dict[str, Any]:
    events = [
        {
            "id": e.id,
            "t": e.t,
            "stream": e.stream,
            "kind": e.kind.value,
            "payload": _enc_payload(dict(e.payload)),
            "domain": e.domain.as_wire() if e.domain else None,
            "src_line": e.src_line,
        }
        for e in bundle.events
    ]
    flags = [
        {
            "id": f.id,
            "rule_id": f.rule_id,
            "module": f.module.value,
            "interval_us": [f.t_start, f.t_end],
            "severity": f.severity.label,
            "score": f.score,
            "evidence": _enc_payload(dict(f.evidence)),
            "message": f.message,
        }
        for f in bundle.flags
    ]
    verdict = None
    if isinstance(bundle.verdict, VerdictReport):
        v = bundle.verdict
        verdict = {
            "case_id": v.case_id,
            "config_hash": v.config_hash,
            "per_module_scores": v.per_module_scores,
            "classification": v.classification.value,
            "rationale": v.rationale,
            "coverage": v.coverage,
            "moderator": None if v.moderator is None else {
                "author": v.moderator.author, "decision": v.moderator.decision,
                "note": v.moderator.note, "t_wall": v.moderator.t_wall,
            },
        }
    return {
        "schema_version": BUNDLE_SCHEMA_VERSION,
        "case_id": bundle.case_id,
        "manifest": _enc_payload(dict(bundle.manifest)),
        "manifest_path": manifest_path,
        "events": events,
        "flags": flags,
        "annotations": [
            {"flag_id": a.flag_id, "action": a.action.value, "note": a.note,
             "author": a.author, "t_wall": a.t_wall}
            for a in bundle.annotations
        ],
        "warnings": list(bundle.warnings),
        "alignments": [a.as_wire() for a in bundle.alignments],
        "coverage": bundle.coverage,
        "verdict": verdict,
    }


def bundle_from_doc(doc: Mapping[str, Any]) -> CaseBundle:
    events = [
        NormalizedEvent(
            id=e["id"],
            t=int(e["t"]),
            stream=e["stream"],
            kind=EventKind(e["kind"]),
            payload=_dec_payload(e["payload"]),
            domain=DomainTag.from_wire(e["domain"]) if e.get("domain") else None,
            src_line=e.get("src_line"),
        )
        for e in doc["events"]
    ]
    flags = [
        AnomalyFlag(
            id=f["id"],
            rule_id=f["rule_id"],
            module=Module(f["module"]),
            t_start=int(f["interval_us"][0]),
            t_end=int(f["interval_us"][1]),
            severity=Severity.from_label(f["severity"]),
            score=float(f["score"]),
            evidence=_dec_payload(f["evidence"]),
            message=f["message"],
        )
        for f in doc["flags"]
    ]
    annotations = [
        Annotation(
            flag_id=a["flag_id"],
            action=AnnotationAction(a["action"]),
            note=a["note"],
            author=a["author"],
            t_wall=a["t_wall"],
        )
        for a in doc.get("annotations", [])
    ]
    alignments = [
        AlignmentEstimate(
            stream=a["stream"],
            offset_us=int(a["offset_us"]),
            drift_rate=float(a["drift_rate"]),
            residual_rms_us=float(a["residual_rms_us"]),
            n_pairs=int(a["n_pairs"]),
        )
        for a in doc.get("alignments", [])
    ]
    verdict = None
    vdoc = doc.get("verdict")
    if vdoc:
        moderator = None
        if vdoc.get("moderator"):
            m = vdoc["moderator"]
            moderator = ModeratorDecision(m["author"], m["decision"], m["note"], m["t_wall"])
        verdict = VerdictReport(
            case_id=vdoc["case_id"],
            config_hash=vdoc["config_hash"],
            per_module_scores=dict(vdoc["per_module_scores"]),
            classification=Classification(vdoc["classification"]),
            rationale=vdoc["rationale"],
            coverage={k: dict(v) for k, v in vdoc.get("coverage", {}).items()},
            moderator=moderator,
        )
    return CaseBundle(
        case_id=doc["case_id"],
        manifest=_dec_payload(doc.get("manifest", {})),
        events=events,
        flags=flags,
        annotations=annotations,
        warnings=list(doc.get("warnings", [])),
        alignments=alignments,
        coverage={k: dict(v) for k, v in doc.get("coverage", {}).items()},
        verdict=verdict,
    )


# --- the store itself ---------------------------------------------------------------

@dataclass(frozen=True)
class RevisionInfo:
    case_id: str
    revision: str
    path: str


class CaseStore:
    def __init__(self, root: str) -> None:
        self.root = root
        os.makedirs(os.path.join(root, "cases"), exist_ok=True)

    # paths
    def _case_dir(self, case_id: str) -> str:
        return os.path.join(self.root, "cases", case_id)

    def _latest_file(self, case_id: str) -> str:
        return os.path.join(self._case_dir(case_id), "LATEST")

    # locking (single writer per case)
    class _Lock:
        def __init__(self, path: str) -> None:
            self.path = path
            self.fd: Optional[int] = None

        def __enter__(self) -> "CaseStore._Lock":
            try:
                self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                raise CaseBusyError(f"case busy: {self.path}") from None
            return self

        def __exit__(self, *exc) -> None:
            if self.fd is not None:
                os.close(self.fd)
            try:
                os.unlink(self.path)
            except FileNotFoundError:
                pass

    def lock(self, case_id: str) -> "CaseStore._Lock":
        os.makedirs(self._case_dir(case_id), exist_ok=True)
        return CaseStore._Lock(os.path.join(self._case_dir(case_id), ".lock"))

    # reads
    def list_cases(self) -> list[str]:
        cases_dir = os.path.join(self.root, "cases")
        out = []
        for name in sorted(os.listdir(cases_dir)):
            if os.path.exists(os.path.join(cases_dir, name, "LATEST")):
                out.append(name)
        return out

    def latest_revision(self, case_id: str) -> Optional[RevisionInfo]:
        latest = self._latest_file(case_id)
        if not os.path.exists(latest):
            return None
        with open(latest, "r", encoding="utf-8") as fh:
            rev = fh.read().strip()
        path = os.path.join(self._case_dir(case_id), rev)
        if not os.path.isdir(path):
            raise StoreError(f"latest pointer of {case_id} names missing revision {rev}")
        return RevisionInfo(case_id=case_id, revision=rev, path=path)

    def load_bundle(self, case_id: str, revision: Optional[str] = None) -> CaseBundle:
        info = self.latest_revision(case_id)
        if revision is not None:
            path = os.path.join(self._case_dir(case_id), revision)
            info = RevisionInfo(case_id, revision, path)
        if info is None or not os.path.isdir(info.path):
            raise StoreError(f"unknown case or revision: {case_id}")
        with open(os.path.join(info.path, "bundle.json"), "r", encoding="utf-8") as fh:
            return bundle_from_doc(json.load(fh))

    def load_report(self, case_id: str) -> dict[str, Any]:
        info = self.latest_revision(case_id)
        if info is None:
            raise StoreError(f"unknown case: {case_id}")
        with open(os.path.join(info.path, "report.json"), "r", encoding="utf-8") as fh:
            return json.load(fh)

    def load_config_snapshot(self, case_id: str) -> DetectorConfig:
        info = self.latest_revision(case_id)
        if info is None:
            raise StoreError(f"unknown case: {case_id}")
        with open(os.path.join(info.path, "config.json"), "r", encoding="utf-8") as fh:
            return config_from_dict(json.load(fh, parse_float=str))

    def manifest_path(self, case_id: str) -> Optional[str]:
        info = self.latest_revision(case_id)
        if info is None:
            return None
        with open(os.path.join(info.path, "bundle.json"), "r", encoding="utf-8") as fh:
            return json.load(fh).get("manifest_path")

    def revisions(self, case_id: str) -> list[str]:
        case_dir = self._case_dir(case_id)
        if not os.path.isdir(case_dir):
            return []
        return sorted(n for n in os.listdir(case_dir) if n.startswith("rev-") and "." not in n)

    # writes
    def save_revision(
        self,
        bundle: CaseBundle,
        cfg: DetectorConfig,
        manifest_path: Optional[str] = None,
    ) -> RevisionInfo:
        """Persist a new immutable revision and atomically move LATEST to it."""
        case_id = bundle.case_id
        with self.lock(case_id):
            existing = self.revisions(case_id)
            if existing:
                n = int(existing[-1].split("-")[1]) + 1
            else:
                n = 0
            rev = f"rev-{n:06d}"
            case_dir = self._case_dir(case_id)
            tmp_dir = os.path.join(case_dir, f".tmp-{rev}")
            final_dir = os.path.join(case_dir, rev)
            if manifest_path is None:
                manifest_path = self.manifest_path(case_id) if existing else None
            os.makedirs(tmp_dir, exist_ok=True)
            doc = bundle_to_doc(bundle, manifest_path=manifest_path)
            with open(os.path.join(tmp_dir, "bundle.json"), "w", encoding="utf-8") as fh:
                json.dump(doc, fh, sort_keys=True, indent=1)
            with open(os.path.join(tmp_dir, "report.json"), "wb") as fh:
                fh.write(render_report(bundle, cfg, "json"))
            with open(os.path.join(tmp_dir, "report.md"), "wb") as fh:
                fh.write(render_report(bundle, cfg, "md"))
            with open(os.path.join(tmp_dir, "config.json"), "w", encoding="utf-8") as fh:
                fh.write(dump_config(cfg) + "\n")
            os.rename(tmp_dir, final_dir)
            self._commit_latest(case_id, rev)
            return RevisionInfo(case_id=case_id, revision=rev, path=final_dir)

    def _commit_latest(self, case_id: str, rev: str) -> None:
        latest = self._latest_file(case_id)
        tmp = latest + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(rev + "\n")
        os.replace(tmp, latest)
