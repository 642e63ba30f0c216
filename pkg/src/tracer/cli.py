"""Command-line interface.

Exit codes from `analyze`: 0 Clean, 1 Inconclusive, 2 operational error,
3 Suspicious or Manipulated - stable for scripted moderation queues.
The store root comes from --store or the TRACER_STORE environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from .config import DetectorConfig, load_config
from .fixtures import (
    RunProfile,
    gen_clean_run,
    load_fixture_profile,
    load_ground_truth,
    make_case,
    tamper_embodiment,
    tamper_prng_bias,
    tamper_speedup,
    tamper_splice,
    write_run,
)
from .ingest import ParseError, load_case
from .model import NotApplicable
from .pipeline import analyze_bundle, classification_exit_code
from .store import CaseStore, StoreError
from .verdict import build_verdict

EXIT_OK = 0
EXIT_INCONCLUSIVE = 1
EXIT_ERROR = 2
EXIT_FLAGGED = 3


def _store(args) -> CaseStore:
    root = args.store or os.environ.get("TRACER_STORE") or os.path.join(os.getcwd(), "tracer-store")
    return CaseStore(root)


def _config(args) -> DetectorConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return DetectorConfig()


def cmd_ingest(args) -> int:
    store = _store(args)
    cfg = _config(args)
    manifest_path = os.path.abspath(args.manifest)
    try:
        bundle = load_case(manifest_path, cfg)
    except (ParseError, OSError) as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    info = store.save_revision(bundle, cfg, manifest_path=manifest_path)
    print(f"{bundle.case_id} {info.revision} ({len(bundle.events)} events)")
    return EXIT_OK


def cmd_analyze(args) -> int:
    store = _store(args)
    try:
        prior = store.load_bundle(args.case_id)
        manifest_path = store.manifest_path(args.case_id)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if manifest_path is None or not os.path.exists(manifest_path):
        print(f"error: artefacts for {args.case_id} not reachable ({manifest_path})", file=sys.stderr)
        return EXIT_ERROR
    cfg = load_config(args.config) if args.config else store.load_config_snapshot(args.case_id)
    try:
        bundle = load_case(manifest_path, cfg)
    except (ParseError, OSError) as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    bundle = analyze_bundle(bundle, cfg, workers=args.workers)
    bundle.annotations = prior.annotations  # flag ids are deterministic across runs
    bundle.verdict = build_verdict(bundle, cfg)
    info = store.save_revision(bundle, cfg, manifest_path=manifest_path)
    print(f"{bundle.case_id} {info.revision}: {bundle.verdict.classification.value} "
          f"({len(bundle.flags)} flags)")
    return classification_exit_code(bundle.verdict.classification)


def cmd_report(args) -> int:
    store = _store(args)
    try:
        info = store.latest_revision(args.case_id)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if info is None:
        print(f"error: unknown case {args.case_id}", file=sys.stderr)
        return EXIT_ERROR
    name = "report.json" if args.format == "json" else "report.md"
    with open(os.path.join(info.path, name), "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def cmd_fixtures_gen(args) -> int:
    profile = RunProfile(duration_s=args.duration) if args.duration else None
    manifest_path, config_path, gt = make_case(
        args.kind, args.seed, args.out, profile=profile
    )
    print(f"{gt.kind} case (seed {gt.seed}) -> {manifest_path}")
    print(f"config -> {config_path}")
    return EXIT_OK


def cmd_fixtures_tamper(args) -> int:
    gt = load_ground_truth(args.case_dir)
    if gt.kind != "clean":
        print(f"error: can only tamper clean fixtures (got '{gt.kind}')", file=sys.stderr)
        return EXIT_ERROR
    profile = load_fixture_profile(args.case_dir)
    run, base_gt = gen_clean_run(gt.seed, profile)
    if args.kind == "splice":
        run, new_gt = tamper_splice(run, base_gt, args.cut, args.removed, snap_to_tick=args.snap_to_tick)
    elif args.kind == "speedup":
        run, new_gt = tamper_speedup(run, base_gt, args.factor, (args.start, args.end))
    elif args.kind == "prng_bias":
        run, new_gt = tamper_prng_bias(run, base_gt, Fraction(args.p_fake))
    elif args.kind == "embodiment":
        run, new_gt = tamper_embodiment(run, base_gt, (args.start, args.end))
    else:
        print(f"error: unknown tamper kind '{args.kind}'", file=sys.stderr)
        return EXIT_ERROR
    run.case_id = f"{args.kind}-{gt.seed:04d}"
    out_dir = args.out or args.case_dir + f"-{args.kind}"
    manifest_path, config_path = write_run(run, new_gt, out_dir)
    print(f"{new_gt.kind} case -> {manifest_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    root = args.store or os.environ.get("TRACER_STORE") or os.path.join(os.getcwd(), "tracer-store")
    serve(args.addr, root, config_path=args.config, token=args.token)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a case manifest and persist revision 0")
    p.add_argument("manifest")
    p.add_argument("-c", "--config")
    p.add_argument("--store")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="run detectors and verdict synthesis on a stored case")
    p.add_argument("case_id")
    p.add_argument("-c", "--config")
    p.add_argument("--store")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="print the latest report for a case")
    p.add_argument("case_id")
    p.add_argument("--format", choices=("json", "md"), default="json")
    p.add_argument("--store")
    p.set_defaults(func=cmd_report)

    fixtures = sub.add_parser("fixtures", help="generate synthetic labelled cases")
    fsub = fixtures.add_subparsers(dest="fixtures_command", required=True)

    p = fsub.add_parser("gen", help="generate a fixture case directory")
    p.add_argument("--kind", default="clean",
                   choices=("clean", "splice", "speedup", "prng_bias", "embodiment"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_fixtures_gen)

    p = fsub.add_parser("tamper", help="apply a manipulation class to a clean fixture")
    p.add_argument("case_dir")
    p.add_argument("--kind", required=True,
                   choices=("splice", "speedup", "prng_bias", "embodiment"))
    p.add_argument("--out")
    p.add_argument("--cut", type=float, default=24.0)
    p.add_argument("--removed", type=float, default=5.0)
    p.add_argument("--snap-to-tick", action="store_true")
    p.add_argument("--factor", type=float, default=1.25)
    p.add_argument("--start", type=float, default=10.0)
    p.add_argument("--end", type=float, default=20.0)
    p.add_argument("--p-fake", default="3/10")
    p.set_defaults(func=cmd_fixtures_tamper)

    p = sub.add_parser("serve", help="run the HTTP case service")
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.add_argument("--store")
    p.add_argument("--config")
    p.add_argument("--token")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NotApplicable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
