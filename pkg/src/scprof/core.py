"""Timing state machine and flush buffer.

A syscall entry starts a timer for its thread, the matching exit stops it and
adds the elapsed monotonic time to that thread's per-syscall totals.  Finished
profile records go through a bounded :class:`FlushBuffer` that is dumped to a
sink when it fills up and once more at the end of the session.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .syscalls import host_arch, syscall_name

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 2048


class Phase(enum.Enum):
    ENTRY = "entry"
    EXIT = "exit"


@dataclass(frozen=True)
class SyscallEvent:
    tid: int
    syscall: int
    phase: Phase
    ts_mono: int
    ts_wall: Optional[int] = None


@dataclass(frozen=True)
class ActiveTimer:
    tid: int
    syscall: int
    entry_ts: int


@dataclass
class SyscallStat:
    total_ns: int = 0
    count: Optional[int] = 0


@dataclass
class ThreadProfile:
    tid: int
    start_wall_ns: Optional[int] = None
    first_entry_mono: Optional[int] = None
    last_exit_mono: Optional[int] = None
    per_syscall: dict[str, SyscallStat] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, ThreadProfile):
            return NotImplemented
        return (
            self.tid == other.tid
            and self.start_wall_ns == other.start_wall_ns
            and self.first_entry_mono == other.first_entry_mono
            and self.last_exit_mono == other.last_exit_mono
            # row order is part of the profile
            and list(self.per_syscall.items()) == list(other.per_syscall.items())
        )

    def add(self, name: str, duration_ns: int, count: int = 1) -> None:
        stat = self.per_syscall.get(name)
        if stat is None:
            self.per_syscall[name] = SyscallStat(duration_ns, count)
        else:
            stat.total_ns += duration_ns
            stat.count = None if stat.count is None else stat.count + count

    @property
    def total_ns(self) -> int:
        return sum(s.total_ns for s in self.per_syscall.values())

    @property
    def window_ns(self) -> Optional[int]:
        if self.first_entry_mono is None or self.last_exit_mono is None:
            return None
        return self.last_exit_mono - self.first_entry_mono


class Accumulator:
    """Folds a stream of :class:`SyscallEvent` into per-thread profiles.

    Only one caller may feed events at a time.  ``namer`` turns a syscall
    number into the row name; it defaults to the host architecture's table.
    """

    def __init__(self, namer: Optional[Callable[[int], str]] = None):
        if namer is None:
            arch = host_arch()
            namer = lambda nr: syscall_name(arch, nr)  # noqa: E731
        self.namer = namer
        self.profiles: dict[int, ThreadProfile] = {}
        self.timers: dict[int, ActiveTimer] = {}
        self.orphan_exits = 0
        self.mismatches = 0
        self.forced_closures = 0
        self._last_ts: dict[int, int] = {}

    def ingest(self, event: SyscallEvent) -> "Accumulator":
        tid = event.tid
        last = self._last_ts.get(tid)
        if last is not None and event.ts_mono < last:
            raise ValueError(f"tid {tid}: timestamp went backwards ({event.ts_mono} < {last})")
        self._last_ts[tid] = event.ts_mono

        if event.phase is Phase.ENTRY:
            profile = self.profiles.get(tid)
            if profile is None:
                profile = self.profiles[tid] = ThreadProfile(tid, start_wall_ns=event.ts_wall)
            elif profile.start_wall_ns is None:
                profile.start_wall_ns = event.ts_wall
            if profile.first_entry_mono is None:
                profile.first_entry_mono = event.ts_mono
            open_timer = self.timers.get(tid)
            if open_timer is not None:
                # entry while a call is still open: the tracer lost an exit
                self.mismatches += 1
                self._close(open_timer, event.ts_mono)
            self.timers[tid] = ActiveTimer(tid, event.syscall, event.ts_mono)
            return self

        timer = self.timers.pop(tid, None)
        if timer is None:
            self.orphan_exits += 1
            return self
        if timer.syscall != event.syscall:
            self.mismatches += 1
        self._close(timer, event.ts_mono)
        return self

    def _close(self, timer: ActiveTimer, ts: int) -> None:
        profile = self.profiles[timer.tid]
        profile.add(self.namer(timer.syscall), ts - timer.entry_ts)
        profile.last_exit_mono = ts

    def close_timer(self, tid: int, ts: int) -> bool:
        """Close ``tid``'s open timer at ``ts`` (for calls that never return)."""
        timer = self.timers.pop(tid, None)
        if timer is None:
            return False
        self._close(timer, max(ts, timer.entry_ts))
        return True

    def close_all(self, end_ts: int) -> int:
        closed = 0
        for tid in list(self.timers):
            self.close_timer(tid, end_ts)
            closed += 1
        self.forced_closures += closed
        return closed


def replay(events: Iterable[SyscallEvent], namer=None) -> Accumulator:
    acc = Accumulator(namer)
    for ev in events:
        acc.ingest(ev)
    return acc


Sink = Callable[[list], None]


class FlushBuffer:
    """Bounded record queue, flushed in insertion order when full.

    When the sink raises (or is ``None``) the whole batch is counted in
    ``missed`` and a warning is logged; collection carries on.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.pending: list = []
        self.pushed = 0
        self.emitted = 0
        self.missed = 0
        self.flushes = 0

    def push(self, record, sink: Optional[Sink]) -> "FlushBuffer":
        self.pending.append(record)
        self.pushed += 1
        if len(self.pending) >= self.capacity:
            self.flush(sink)
        return self

    def flush(self, sink: Optional[Sink]) -> int:
        batch, self.pending = self.pending, []
        self.flushes += 1
        try:
            if sink is None:
                raise OSError("no sink attached")
            sink(batch)
        except (OSError, ValueError) as exc:
            self.missed += len(batch)
            log.warning("WARNING: Number of missed events: %d (%s)", self.missed, exc)
            return 0
        self.emitted += len(batch)
        return len(batch)


class FileSink:
    """Appends text records to a file, one per line."""

    def __init__(self, path):
        self.path = path
        self.bytes_written = 0
        self._fh = open(path, "w", encoding="utf-8", newline="\n")

    def __call__(self, records: list) -> None:
        data = "".join(f"{r}\n" for r in records)
        self._fh.write(data)
        self._fh.flush()
        self.bytes_written += len(data.encode("utf-8"))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Collector:
    """Accumulator plus flush buffer: retired threads become output records.

    ``to_records`` renders one finished :class:`ThreadProfile` into records;
    by default the text rows of the profile file format.
    """

    def __init__(self, buffer: FlushBuffer, sink: Optional[Sink], namer=None, to_records=None):
        if to_records is None:
            from .traceformat import section_lines as to_records
        self.acc = Accumulator(namer)
        self.buffer = buffer
        self.sink = sink
        self.to_records = to_records
        self.retired: set[int] = set()

    def ingest(self, event: SyscallEvent) -> None:
        self.acc.ingest(event)

    def retire(self, tid: int) -> None:
        """Push a finished thread's section into the buffer."""
        if tid in self.retired or tid not in self.acc.profiles:
            return
        self.retired.add(tid)
        for record in self.to_records(self.acc.profiles[tid]):
            self.buffer.push(record, self.sink)

    def finalize(self, end_ts: int) -> dict[int, ThreadProfile]:
        return finalize(self, end_ts)


def finalize(collector: Collector, end_ts: int) -> dict[int, ThreadProfile]:
    """Close open timers at ``end_ts``, emit remaining threads, force a flush."""
    collector.acc.close_all(end_ts)
    for tid in sorted(collector.acc.profiles):
        collector.retire(tid)
    collector.buffer.flush(collector.sink)
    return dict(sorted(collector.acc.profiles.items()))
