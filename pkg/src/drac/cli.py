"""Command line: ``drac validate`` and ``drac run``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from drac.errors import DracError, LoadError
from drac.pricing import load_price_book
from drac.scenario import load_script, run_loaded
from drac.spec import SpecSyntaxError, load_architecture, validate_architecture
from drac.spec.graph import CyclicDependency
from drac.store import CorruptStore, RecordingStore

EXIT_OK, EXIT_LOAD, EXIT_MISMATCH = 0, 1, 2


def _load_spec(path: str):
    try:
        return load_architecture(path)
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror or exc}") from None


def cmd_validate(args) -> int:
    spec = _load_spec(args.spec)
    report = validate_architecture(spec)
    for f in report.findings:
        print(f.format(args.spec))
    per = ", ".join(f"{d.name} {len(d.services)}" for d in spec.dracs)
    print(f"# {len(spec.dracs)} DRACs, {spec.service_count()} services ({per}); "
          f"{len(report.errors)} errors, {len(report.warnings)} warnings")
    return EXIT_OK if report.ok else EXIT_LOAD


def cmd_run(args) -> int:
    spec = _load_spec(args.spec)
    if not validate_architecture(spec).ok:
        raise LoadError(f"{args.spec}: architecture has reference errors; run `drac validate`")
    try:
        book = load_price_book(args.prices)
    except OSError as exc:
        raise LoadError(f"{args.prices}: {exc.strerror or exc}") from None
    script = load_script(args.scenario)
    store = RecordingStore(args.store) if args.store else None
    report = run_loaded(spec, book, script, args.seed, loss_prob=args.loss_prob,
                        ack_timeout=args.ack_timeout_min, max_attempts=args.max_attempts, store=store)
    if args.trace_out:
        Path(args.trace_out).write_bytes(report.serialized.encode("utf-8"))
    else:
        sys.stdout.write(report.serialized)
    if args.report_dir:
        from drac.report import channel_figure, timeline_figure

        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"scenario_{script.id}_seed{args.seed}"
        (out / f"{stem}.tsv").write_bytes(report.serialized.encode("utf-8"))
        timeline_figure(report.trace, out / f"{stem}_timeline.png", f"scenario {script.id}: {script.title}")
        channel_figure(report.channel_counts, out / f"{stem}_channel.png", f"scenario {script.id} fax outcomes")
    status = "MATCH" if report.matched else f"MISMATCH {report.first_mismatch}"
    print(f"# scenario {script.id} seed {args.seed}: {status}; terminal {report.terminal_state}; "
          f"audit findings {len(report.audit)}", file=sys.stderr)
    if not report.matched and args.strict:
        return EXIT_MISMATCH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drac", description="Validate and run DRAC architectures.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check an architecture file")
    v.add_argument("spec")
    v.set_defaults(func=cmd_validate)
    r = sub.add_parser("run", help="run a scenario script")
    r.add_argument("--spec", required=True)
    r.add_argument("--prices", required=True)
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--loss-prob", type=float, default=None)
    r.add_argument("--ack-timeout-min", type=int, default=None)
    r.add_argument("--max-attempts", type=int, default=None)
    r.add_argument("--strict", action="store_true", help="exit 2 when the trace does not match")
    r.add_argument("--trace-out")
    r.add_argument("--store", help="recording store file to append the order to")
    r.add_argument("--report-dir", help="write the TSV trace and PNG figures here")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run" and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_LOAD
    try:
        return args.func(args)
    except (LoadError, SpecSyntaxError, CorruptStore, CyclicDependency, DracError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD


if __name__ == "__main__":
    sys.exit(main())
