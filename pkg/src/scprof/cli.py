"""Command-line entry point.

Exit codes: 0 success (``run`` returns the target's own code), 65 unreadable
profile data, 70 tracer desync, 127 target could not be launched.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from functools import partial

from . import analyzer, traceformat
from .core import DEFAULT_CAPACITY
from .tracer import LaunchError, TraceConfig, TracerDesyncError, emit_probe_script, trace_process

EX_DATAERR = 65
EX_SOFTWARE = 70
EX_NOTFOUND = 127

DEFAULT_OUTPUT = "scprof.prof"


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _strip_dashdash(argv: list[str]) -> list[str]:
    return argv[1:] if argv and argv[0] == "--" else argv


def cmd_run(args) -> int:
    target = _strip_dashdash(args.target)
    if not target:
        print("scprof run: no target command given (use: scprof run [flags] -- PROGRAM ARGS...)", file=sys.stderr)
        return 2
    output = args.output or os.environ.get("STAKTAU_OUTPUT") or DEFAULT_OUTPUT
    config = TraceConfig(target, buffer_capacity=args.buffer, follow_threads=not args.no_follow,
                         output_path=output, counts=args.counts)
    try:
        result = trace_process(config)
    except LaunchError as exc:
        print(f"scprof run: cannot launch {target[0]}: {exc.strerror or exc}", file=sys.stderr)
        return EX_NOTFOUND
    except TracerDesyncError as exc:
        print(f"scprof run: tracer desync, partial profile kept in {output}: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    rows = sum(len(p.per_syscall) for p in result.profiles.values())
    print(
        f"scprof: {len(result.profiles)} threads, {rows} syscall rows, "
        f"{result.missed} missed, {result.trace_bytes} bytes -> {output}",
        file=sys.stderr,
    )
    return result.returncode


def _read_samples(path: str) -> list[analyzer.RunSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split("#", 1)[0].replace(",", " ").split()
            if parts:
                size = int(parts[1]) if len(parts) > 1 else 0
                samples.append(analyzer.RunSample(float(parts[0]), size))
    return samples


def cmd_report(args) -> int:
    out = []
    for path in args.profiles:
        try:
            doc = traceformat.read_profile(path)
        except traceformat.ProfileParseError as exc:
            print(f"scprof report: {exc}", file=sys.stderr)
            return EX_DATAERR
        except OSError as exc:
            print(f"scprof report: {path}: {exc.strerror}", file=sys.stderr)
            return EX_DATAERR
        if not doc.threads:
            continue
        if len(args.profiles) > 1:
            out.append(f"== {path}")
        out.append(traceformat.write_profile(doc))
        out.append("== all threads")
        out.append(analyzer.format_aggregate(analyzer.aggregate_syscalls(doc)))
    if args.vanilla or args.profiled:
        if not (args.vanilla and args.profiled):
            print("scprof report: --vanilla and --profiled go together", file=sys.stderr)
            return 2
        try:
            row = analyzer.overhead_stats(_read_samples(args.vanilla), _read_samples(args.profiled), args.name)
        except (OSError, ValueError) as exc:
            print(f"scprof report: {exc}", file=sys.stderr)
            return EX_DATAERR
        out.append(analyzer.format_csv([row]) if args.csv else analyzer.format_table([row]))
    text = "".join(part if part.endswith("\n") else part + "\n" for part in out)
    sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    from .bench import BENCHMARKS, BenchmarkError, BenchSpec, run_experiment

    names = [args.only] if args.only else list(BENCHMARKS)
    profiler = None if args.no_profiler else TraceConfig(["-"], buffer_capacity=args.buffer)
    rows = []
    for name in names:
        spec = BenchSpec(name, threads=args.threads, repetitions=args.reps)
        for attr in ("intervals", "width", "height", "spp"):
            if getattr(args, attr) is not None:
                setattr(spec, attr, getattr(args, attr))
        try:
            rows.append(run_experiment(spec, profiler))
        except BenchmarkError as exc:
            print(f"scprof bench: {name} failed: {exc}", file=sys.stderr)
            return 1
    text = analyzer.format_csv(rows) if args.csv else analyzer.format_table(rows)
    sys.stdout.write(text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    for row in rows:
        if row.missed:
            print(f"scprof bench: {row.benchmark}: {row.missed} records missed", file=sys.stderr)
    return 0


def cmd_emit_script(args) -> int:
    command = _strip_dashdash(args.target) or ["PROGRAM"]
    text = emit_probe_script(TraceConfig(command, buffer_capacity=args.buffer))
    if not args.output or args.output == "-":
        sys.stdout.write(text)
        return 0
    try:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"scprof emit-script: {args.output}: {exc.strerror}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="output path")
    common.add_argument("--buffer", type=_positive, default=DEFAULT_CAPACITY,
                        help=f"flush buffer capacity in records (default {DEFAULT_CAPACITY})")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="scprof", description="Per-thread syscall time profiler.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("run", parents=[common], help="trace a program and write its profile")
    p.add_argument("--counts", action="store_true", help="add a call-count column")
    p.add_argument("--no-follow", action="store_true", help="do not follow new threads")
    p.add_argument("target", nargs=argparse.REMAINDER)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="summarise profile files")
    p.add_argument("profiles", nargs="*")
    p.add_argument("--vanilla", help="file of vanilla run times (seconds per line)")
    p.add_argument("--profiled", help="file of profiled run times (seconds [bytes] per line)")
    p.add_argument("--name", default="", help="benchmark label for the overhead table")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", parents=[common], help="measure profiler overhead on the benchmarks")
    p.add_argument("--reps", type=_positive, default=10)
    p.add_argument("--threads", type=_positive, default=os.cpu_count() or 1)
    p.add_argument("--only", choices=["pi", "raytrace"])
    p.add_argument("--no-profiler", action="store_true")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--intervals", type=_positive)
    p.add_argument("--width", type=_positive)
    p.add_argument("--height", type=_positive)
    p.add_argument("--spp", type=_positive)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("emit-script", parents=[common], help="print the equivalent SystemTap script")
    p.add_argument("target", nargs=argparse.REMAINDER)
    p.set_defaults(func=cmd_emit_script)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(name)s: %(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
