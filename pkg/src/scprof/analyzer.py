"""Cross-thread rollups and overhead statistics over profile documents."""
from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

from .core import ThreadProfile
from .traceformat import ProfileDocument


@dataclass(frozen=True)
class RunSample:
    wall_seconds: float
    trace_bytes: int = 0

    def __post_init__(self):
        if not self.wall_seconds > 0:
            raise ValueError(f"wall_seconds must be > 0, got {self.wall_seconds}")
        if self.trace_bytes < 0:
            raise ValueError("trace_bytes must be >= 0")


@dataclass
class OverheadRow:
    benchmark: str
    vanilla_mean_s: float
    vanilla_std_s: float
    profiled_mean_s: Optional[float] = None
    profiled_std_s: Optional[float] = None
    overhead_percent: Optional[float] = None
    trace_file_bytes: Optional[int] = None
    missed: int = 0

    @property
    def intensity_b_per_ms(self) -> Optional[float]:
        if self.trace_file_bytes is None or not self.profiled_mean_s:
            return None
        return logging_intensity(self.trace_file_bytes, self.profiled_mean_s)


def aggregate_syscalls(doc: ProfileDocument) -> dict[str, int]:
    """Total ns per syscall over all threads, largest first, ties by name."""
    totals: dict[str, int] = {}
    for thread in doc.threads:
        for name, stat in thread.per_syscall.items():
            totals[name] = totals.get(name, 0) + stat.total_ns
    return dict(sorted(totals.items(), key=lambda kv: (-kv[1], kv[0])))


def _sample_std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return statistics.stdev(values)


def overhead_stats(
    vanilla: Sequence[RunSample],
    profiled: Sequence[RunSample],
    benchmark: str = "",
) -> OverheadRow:
    """Means, sample std devs and ``100 * profiled_mean / vanilla_mean``."""
    if not vanilla or not profiled:
        raise ValueError("overhead_stats needs at least one vanilla and one profiled sample")
    v = [s.wall_seconds for s in vanilla]
    p = [s.wall_seconds for s in profiled]
    v_mean = statistics.fmean(v)
    p_mean = statistics.fmean(p)
    return OverheadRow(
        benchmark=benchmark,
        vanilla_mean_s=v_mean,
        vanilla_std_s=_sample_std(v),
        profiled_mean_s=p_mean,
        profiled_std_s=_sample_std(p),
        overhead_percent=100.0 * (p_mean / v_mean),
        trace_file_bytes=round(statistics.fmean(s.trace_bytes for s in profiled)),
    )


def vanilla_only(vanilla: Sequence[RunSample], benchmark: str = "") -> OverheadRow:
    if not vanilla:
        raise ValueError("need at least one sample")
    v = [s.wall_seconds for s in vanilla]
    return OverheadRow(benchmark, statistics.fmean(v), _sample_std(v))


def logging_intensity(trace_bytes: int, wall_seconds: float) -> float:
    """Profile bytes per millisecond of execution."""
    if wall_seconds <= 0:
        raise ValueError("wall_seconds must be > 0")
    return trace_bytes / (wall_seconds * 1000.0)


def total_kernel_fraction(thread: ThreadProfile) -> float:
    """Share of the first-syscall-to-exit window spent inside syscalls."""
    window = thread.window_ns
    if window is None:
        raise ValueError(f"tid {thread.tid}: window bounds unknown")
    if window <= 0:
        raise ValueError(f"tid {thread.tid}: zero-length window")
    return thread.total_ns / window


def format_table(rows: Iterable[OverheadRow]) -> str:
    """Plain-text layout modelled on the usual overhead table."""
    out = []
    out.append(f"{'Benchmark':<14}{'Execution time (s)':>20}{'Std dev':>10}{'Trace file size':>18}")
    out.append("-" * 62)
    for row in rows:
        out.append(row.benchmark)
        out.append(f"{'  Vanilla:':<14}{row.vanilla_mean_s:>20.3f}{row.vanilla_std_s:>10.3f}")
        if row.profiled_mean_s is not None:
            size = f"{row.trace_file_bytes:,} B".replace(",", " ")
            out.append(f"{'  Profiled:':<14}{row.profiled_mean_s:>20.3f}{row.profiled_std_s:>10.3f}{size:>18}")
            out.append(f"{'  Overhead:':<14}{row.overhead_percent:>19.1f}%")
            out.append(f"{'  Intensity:':<14}{row.intensity_b_per_ms:>15.2f} B/ms")
            if row.missed:
                out.append(f"{'  Missed:':<14}{row.missed:>20d}")
    return "\n".join(out) + "\n"


def format_csv(rows: Iterable[OverheadRow]) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(OverheadRow)] + ["intensity_b_per_ms"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in rows:
        values = [getattr(row, n) for n in names]
        writer.writerow(["" if v is None else v for v in values])
    return buf.getvalue()


def format_aggregate(totals: dict[str, int]) -> str:
    lines = [f"{'call':<23} | total (ns)", "-" * 33]
    lines += [f"{name:<23} | {ns}" for name, ns in totals.items()]
    return "\n".join(lines) + "\n"
