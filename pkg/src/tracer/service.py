"""HTTP case service backing the review UI.

All responses are schema-versioned JSON.  The service is a thin shell over
the case store and the verdict module: annotation and verdict posts append to
the bundle, recompute the verdict with the revision's own config snapshot and
persist a new revision.  Scoring never happens client-side.
"""
from __future__ import annotations

import datetime
import os
import threading
from typing import Any, Optional

from fastapi import FastAPI, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .config import DetectorConfig, load_config
from .ingest import parse_manifest
from .model import Annotation, AnnotationAction
from .pipeline import run_pipeline
from .store import CaseBusyError, CaseStore, StoreError
from .verdict import (
    ModeratorDecision,
    SCHEMA_VERSION,
    VerdictReport,
    build_verdict,
    report_document,
)


def _now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def create_app(
    store_root: str,
    default_config: Optional[DetectorConfig] = None,
    token: Optional[str] = None,
) -> FastAPI:
    app = FastAPI(title="tracer case service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = CaseStore(store_root)
    jobs: dict[str, str] = {}  # case_id -> running | done | error: ...
    app.state.store = store
    app.state.jobs = jobs
    app.state.default_config = default_config or DetectorConfig()

    if token:
        @app.middleware("http")
        async def require_token(request: Request, call_next):
            if request.method == "OPTIONS":
                return await call_next(request)
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return JSONResponse({"detail": "unauthorized"}, status_code=401)
            return await call_next(request)

    def _report_or_404(case_id: str) -> dict[str, Any]:
        try:
            return store.load_report(case_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"unknown case: {case_id}") from None

    @app.get("/cases")
    def list_cases() -> dict[str, Any]:
        rows = []
        for case_id in store.list_cases():
            try:
                report = store.load_report(case_id)
                rows.append(
                    {
                        "case_id": case_id,
                        "status": jobs.get(case_id, "done"),
                        "classification": report.get("classification"),
                        "machine_only": report.get("machine_only", True),
                        "flag_count": len(report.get("flags", [])),
                    }
                )
            except StoreError:
                continue
        for case_id, status in sorted(jobs.items()):
            if status != "done" and all(r["case_id"] != case_id for r in rows):
                rows.append({"case_id": case_id, "status": status, "classification": None,
                             "machine_only": True, "flag_count": 0})
        return {"schema_version": SCHEMA_VERSION, "cases": rows}

    @app.post("/cases", status_code=202)
    async def submit_case(manifest: UploadFile, artefacts: list[UploadFile]) -> dict[str, Any]:
        manifest_bytes = await manifest.read()
        try:
            parsed = parse_manifest(manifest_bytes)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=f"bad manifest: {exc}") from exc
        case_id = parsed.case_id
        upload_dir = os.path.join(store_root, "uploads", case_id)
        os.makedirs(upload_dir, exist_ok=True)
        manifest_path = os.path.join(upload_dir, "manifest.json")
        with open(manifest_path, "wb") as fh:
            fh.write(manifest_bytes)
        for art in artefacts:
            name = os.path.basename(art.filename or "artefact")
            with open(os.path.join(upload_dir, name), "wb") as fh:
                fh.write(await art.read())

        cfg = app.state.default_config
        jobs[case_id] = "running"

        def work() -> None:
            try:
                bundle = run_pipeline(manifest_path, cfg, store=None)
                store.save_revision(bundle, cfg, manifest_path=manifest_path)
                jobs[case_id] = "done"
            except Exception as exc:
                jobs[case_id] = f"error: {exc}"

        threading.Thread(target=work, daemon=True).start()
        return {
            "schema_version": SCHEMA_VERSION,
            "case_id": case_id,
            "status": "running",
            "status_url": f"/cases/{case_id}",
        }

    @app.get("/cases/{case_id}")
    def get_case(case_id: str) -> dict[str, Any]:
        status = jobs.get(case_id)
        if status and status != "done":
            return {"schema_version": SCHEMA_VERSION, "case_id": case_id, "status": status}
        report = _report_or_404(case_id)
        report["status"] = "done"
        return report

    @app.get("/cases/{case_id}/flags")
    def get_flags(case_id: str) -> dict[str, Any]:
        report = _report_or_404(case_id)
        return {
            "schema_version": SCHEMA_VERSION,
            "case_id": case_id,
            "flags": report.get("flags", []),
        }

    @app.post("/cases/{case_id}/flags/{flag_id}/annotations")
    def post_annotation(case_id: str, flag_id: str, body: dict[str, Any]) -> dict[str, Any]:
        action = body.get("action")
        if action not in (a.value for a in AnnotationAction):
            raise HTTPException(status_code=422, detail=f"invalid annotation action: {action}")
        try:
            bundle = store.load_bundle(case_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"unknown case: {case_id}") from None
        if all(f.id != flag_id for f in bundle.flags):
            raise HTTPException(status_code=404, detail=f"unknown flag: {flag_id}")
        bundle.annotations.append(
            Annotation(
                flag_id=flag_id,
                action=AnnotationAction(action),
                note=str(body.get("note", "")),
                author=str(body.get("author", "anonymous")),
                t_wall=_now_iso(),
            )
        )
        cfg = store.load_config_snapshot(case_id)
        bundle.verdict = build_verdict(bundle, cfg)
        try:
            store.save_revision(bundle, cfg)
        except CaseBusyError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return store.load_report(case_id)

    @app.post("/cases/{case_id}/verdict")
    def post_verdict(case_id: str, body: dict[str, Any]) -> dict[str, Any]:
        try:
            bundle = store.load_bundle(case_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"unknown case: {case_id}") from None
        if isinstance(bundle.verdict, VerdictReport) and bundle.verdict.moderator is not None:
            raise HTTPException(status_code=409, detail="verdict already finalized")
        cfg = store.load_config_snapshot(case_id)
        report = build_verdict(bundle, cfg)
        report.moderator = ModeratorDecision(
            author=str(body.get("author", "anonymous")),
            decision=str(body.get("decision", "")),
            note=str(body.get("note", "")),
            t_wall=_now_iso(),
        )
        bundle.verdict = report
        try:
            store.save_revision(bundle, cfg)
        except CaseBusyError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return store.load_report(case_id)

    @app.get("/cases/{case_id}/events")
    def get_events(
        case_id: str,
        from_us: Optional[int] = None,
        to_us: Optional[int] = None,
        kinds: Optional[str] = None,
    ) -> dict[str, Any]:
        try:
            bundle = store.load_bundle(case_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"unknown case: {case_id}") from None
        wanted = set(kinds.split(",")) if kinds else None
        out = []
        for ev in bundle.events:
            if from_us is not None and ev.t < from_us:
                continue
            if to_us is not None and ev.t > to_us:
                continue
            if wanted is not None and ev.kind.value not in wanted:
                continue
            out.append(
                {
                    "id": ev.id,
                    "t_us": ev.t,
                    "stream": ev.stream,
                    "kind": ev.kind.value,
                    "domain": ev.domain.as_wire() if ev.domain else None,
                    "payload": {k: _wire_value(v) for k, v in ev.payload.items()},
                }
            )
        return {"schema_version": SCHEMA_VERSION, "case_id": case_id, "events": out}

    return app


def _wire_value(v: Any) -> Any:
    from fractions import Fraction

    if isinstance(v, Fraction):
        return str(v)
    return v


def serve(addr: str, store_root: str, config_path: Optional[str] = None,
          token: Optional[str] = None) -> None:
    import uvicorn

    host, _, port = addr.partition(":")
    cfg = load_config(config_path) if config_path else None
    app = create_app(store_root, default_config=cfg, token=token)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="warning")
