"""ptrace-driven tracing backend.

One coordinator (the calling thread) forks the target, waits on every stop of
every traced thread and turns syscall stops into :class:`SyscallEvent`s for a
:class:`~scprof.core.Collector`.  All ptrace requests must come from this
thread; only one session per process should run at a time because the wait
loop reaps any child.
"""
from __future__ import annotations

import enum
import logging
import os
import shutil
import signal
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

from .. import core
from ..core import Collector, FileSink, FlushBuffer, Phase, SyscallEvent, ThreadProfile
from ..traceformat import section_lines
from ..syscalls import AUDIT_ARCH, host_arch, syscall_name
from . import ptrace as pt

log = logging.getLogger(__name__)

SYSCALL_TRAP = signal.SIGTRAP | 0x80


class LaunchError(OSError):
    """The target program could not be started."""


class TracerDesyncError(RuntimeError):
    """Stop sequence did not match the tracked entry/exit parity.

    ``result`` holds the partial :class:`RunResult`; its profiles were
    finalized and flushed before the error was raised.
    """

    def __init__(self, message: str, result: "RunResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass
class TraceConfig:
    command: Sequence[str]
    buffer_capacity: int = core.DEFAULT_CAPACITY
    follow_threads: bool = True
    clock: str = "monotonic"
    output_path: Optional[str] = None
    counts: bool = False

    def __post_init__(self):
        self.command = list(self.command)
        if not self.command:
            raise ValueError("command must not be empty")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if self.clock != "monotonic":
            raise ValueError(f"unsupported clock {self.clock!r}")


@dataclass
class RunResult:
    exit_status: Optional[int]
    signal: Optional[int]
    profiles: dict[int, ThreadProfile]
    orphan_exits: int = 0
    mismatches: int = 0
    forced_closures: int = 0
    missed: int = 0
    records_pushed: int = 0
    records_emitted: int = 0
    trace_bytes: int = 0
    wall_seconds: float = 0.0
    arch: str = field(default_factory=host_arch)
    pid: int = 0

    @property
    def returncode(self) -> int:
        """Shell-style code: the exit status, or 128 + signal number."""
        if self.exit_status is not None:
            return self.exit_status
        if self.signal is not None:
            return 128 + self.signal
        return 70

    def counts(self) -> dict[str, int]:
        """Invocation counts per syscall name summed over all threads."""
        total: dict[str, int] = {}
        for prof in self.profiles.values():
            for name, stat in prof.per_syscall.items():
                total[name] = total.get(name, 0) + (stat.count or 0)
        return total


class StopKind(enum.Enum):
    SYSCALL_ENTRY = "syscall-entry"
    SYSCALL_EXIT = "syscall-exit"
    THREAD_CREATED = "thread-created"
    THREAD_EXITED = "thread-exited"
    OTHER = "other"


@dataclass
class TraceeState:
    tid: int
    in_syscall: bool = False
    current_syscall: Optional[int] = None
    alive: bool = True


class StopClassifier:
    """Tracks per-thread entry/exit parity and classifies raw wait statuses.

    Syscall-entry and syscall-exit stops look identical in the wait status,
    so the direction comes from the parity kept in :class:`TraceeState`.
    """

    def __init__(self):
        self.states: dict[int, TraceeState] = {}

    def register(self, tid: int) -> bool:
        if tid in self.states:
            return False
        self.states[tid] = TraceeState(tid)
        return True

    def classify(self, tid: int, status: int, nr: int = -1) -> list[StopKind]:
        kinds = []
        if self.register(tid):
            kinds.append(StopKind.THREAD_CREATED)
        state = self.states[tid]

        if os.WIFEXITED(status) or os.WIFSIGNALED(status):
            if state.alive:
                state.alive = False
                kinds.append(StopKind.THREAD_EXITED)
            else:
                kinds.append(StopKind.OTHER)
            return kinds

        sig = os.WSTOPSIG(status)
        event = status >> 16
        if sig == SYSCALL_TRAP:
            if state.in_syscall:
                state.in_syscall, state.current_syscall = False, None
                kinds.append(StopKind.SYSCALL_EXIT)
            else:
                state.in_syscall, state.current_syscall = True, nr
                kinds.append(StopKind.SYSCALL_ENTRY)
        elif sig == signal.SIGTRAP and event == pt.PTRACE_EVENT_EXIT:
            state.alive = False
            kinds.append(StopKind.THREAD_EXITED)
        elif sig == signal.SIGTRAP and event in (pt.PTRACE_EVENT_CLONE, pt.PTRACE_EVENT_FORK, pt.PTRACE_EVENT_VFORK):
            kinds.append(StopKind.THREAD_CREATED)
        else:
            kinds.append(StopKind.OTHER)
        return kinds


def classify_stop(tid: int, state: TraceeState, status: int) -> StopKind:
    """Single-thread convenience wrapper around :class:`StopClassifier`."""
    clf = StopClassifier()
    clf.states[tid] = state
    return clf.classify(tid, status, nr=state.current_syscall if state.current_syscall is not None else -1)[-1]


def _resolve(argv0: str) -> str:
    if os.sep in argv0:
        path = argv0
    else:
        path = shutil.which(argv0)
        if path is None:
            raise LaunchError(2, f"{argv0}: command not found")
    if not os.path.exists(path):
        raise LaunchError(2, f"{path}: No such file or directory")
    if os.path.isdir(path) or not os.access(path, os.X_OK):
        raise LaunchError(13, f"{path}: Permission denied")
    return path


def _spawn_stopped(path: str, argv: list[str]) -> tuple[int, int]:
    """Fork a child that requests tracing and stops itself before exec."""
    r, w = os.pipe()
    pid = os.fork()
    if pid == 0:  # pragma: no cover - runs in the child
        try:
            os.close(r)
            pt.traceme()
            os.kill(os.getpid(), signal.SIGSTOP)
            os.execv(path, argv)
        except BaseException as exc:
            code = getattr(exc, "errno", None) or 1
            try:
                os.write(w, str(code).encode())
            finally:
                os._exit(127)
    os.close(w)
    return pid, r


class _Session:
    def __init__(self, config: TraceConfig, sink):
        self.config = config
        self.arch = host_arch()
        self.buffer = FlushBuffer(config.buffer_capacity)
        self.collector = Collector(
            self.buffer, sink, namer=self._name, to_records=partial(section_lines, counts=config.counts)
        )
        self.clf = StopClassifier()
        self.live: set[int] = set()
        self.awaiting_sigstop: set[int] = set()
        self.seen_event: set[int] = set()
        self.exit_status: Optional[int] = None
        self.term_signal: Optional[int] = None
        self.pid = -1

    def _name(self, nr: int) -> str:
        return syscall_name(self.arch, nr)

    def syscall_info(self, tid: int):
        return pt.get_syscall_info(tid)

    def options(self) -> int:
        opts = pt.PTRACE_O_TRACESYSGOOD | pt.PTRACE_O_TRACEEXIT | pt.PTRACE_O_TRACEEXEC | pt.PTRACE_O_EXITKILL
        if self.config.follow_threads:
            opts |= pt.PTRACE_O_TRACECLONE
        return opts

    def _event(self, tid: int, nr: int, phase: Phase, now: int) -> SyscallEvent:
        wall = None
        if tid not in self.seen_event:
            self.seen_event.add(tid)
            wall = time.time_ns()
        return SyscallEvent(tid, nr, phase, now, wall)

    def start(self, path: str, argv: list[str]) -> int:
        pid, self.errpipe = _spawn_stopped(path, argv)
        self.pid = pid
        _, status = os.waitpid(pid, pt.WALL)
        if not os.WIFSTOPPED(status):
            raise LaunchError(0, f"target exited before tracing started (status {status:#x})")
        pt.setoptions(pid, self.options())
        self.clf.register(pid)
        self.live.add(pid)
        pt.resume(pid)
        return pid

    def _retire(self, tid: int, now: int) -> None:
        state = self.clf.states.get(tid)
        if state is not None and state.in_syscall:
            # exit/exit_group never return; other calls were cut short by the exit
            self.collector.acc.close_timer(tid, now)
            state.in_syscall, state.current_syscall = False, None
        self.collector.retire(tid)

    def step(self) -> None:
        tid, status = os.waitpid(-1, pt.WALL)
        now = time.monotonic_ns()
        sig = os.WSTOPSIG(status) if os.WIFSTOPPED(status) else 0
        if os.WIFSTOPPED(status) and sig == SYSCALL_TRAP:
            state = self.clf.states.get(tid)
            entering = state is None or not state.in_syscall
            op, audit_arch, nr = self.syscall_info(tid)
            expected = pt.PTRACE_SYSCALL_INFO_ENTRY if entering else pt.PTRACE_SYSCALL_INFO_EXIT
            if op != pt.PTRACE_SYSCALL_INFO_NONE and op != expected:
                raise TracerDesyncError(
                    f"tid {tid}: expected syscall {'entry' if entering else 'exit'} stop, kernel reports op={op}"
                )
            if audit_arch in AUDIT_ARCH:
                self.arch = AUDIT_ARCH[audit_arch]
            current = state.current_syscall if state is not None else None
            kinds = self.clf.classify(tid, status, nr if nr is not None else -1)
        else:
            current = None
            kinds = self.clf.classify(tid, status)

        resume_sig = 0
        for kind in kinds:
            if kind is StopKind.THREAD_CREATED and not os.WIFSTOPPED(status):
                pass
            elif kind is StopKind.THREAD_CREATED and (status >> 16) in (pt.PTRACE_EVENT_CLONE,):
                child = pt.geteventmsg(tid)
                if self.clf.register(child):
                    self.awaiting_sigstop.add(child)
                self.live.add(child)
            elif kind is StopKind.THREAD_CREATED:
                # child stop arrived before the parent's clone event
                self.live.add(tid)
                self.awaiting_sigstop.add(tid)
            elif kind is StopKind.SYSCALL_ENTRY:
                self.collector.ingest(self._event(tid, self.clf.states[tid].current_syscall, Phase.ENTRY, now))
            elif kind is StopKind.SYSCALL_EXIT:
                self.collector.ingest(self._event(tid, current, Phase.EXIT, now))
            elif kind is StopKind.THREAD_EXITED:
                self._retire(tid, now)
            elif kind is StopKind.OTHER and os.WIFSTOPPED(status) and sig != SYSCALL_TRAP:
                if sig == signal.SIGSTOP and tid in self.awaiting_sigstop:
                    self.awaiting_sigstop.discard(tid)
                elif sig != signal.SIGTRAP:
                    resume_sig = sig

        if os.WIFEXITED(status) or os.WIFSIGNALED(status):
            self._retire(tid, now)
            self.live.discard(tid)
            self.awaiting_sigstop.discard(tid)
            if tid == self.pid:
                if os.WIFEXITED(status):
                    self.exit_status = os.WEXITSTATUS(status)
                else:
                    self.term_signal = os.WTERMSIG(status)
            return
        if not pt.resume(tid, resume_sig):
            log.debug("tid %d vanished before resume", tid)

    def run(self) -> None:
        while self.live:
            try:
                self.step()
            except ChildProcessError:
                break

    def abort(self) -> None:
        try:
            os.kill(self.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        while self.live:
            try:
                tid, status = os.waitpid(-1, pt.WALL)
            except ChildProcessError:
                break
            if os.WIFEXITED(status) or os.WIFSIGNALED(status):
                self.live.discard(tid)
                if tid == self.pid and os.WIFSIGNALED(status):
                    self.term_signal = os.WTERMSIG(status)
            else:
                pt.resume(tid, 0, pt.PTRACE_CONT)

    def launch_failure(self) -> Optional[int]:
        try:
            data = os.read(self.errpipe, 64)
        finally:
            os.close(self.errpipe)
        return int(data) if data.strip() else None

    def result(self, sink, elapsed: float) -> RunResult:
        profiles = self.collector.finalize(time.monotonic_ns())
        acc = self.collector.acc
        return RunResult(
            exit_status=self.exit_status,
            signal=self.term_signal,
            profiles=profiles,
            orphan_exits=acc.orphan_exits,
            mismatches=acc.mismatches,
            forced_closures=acc.forced_closures,
            missed=self.buffer.missed,
            records_pushed=self.buffer.pushed,
            records_emitted=self.buffer.emitted,
            trace_bytes=getattr(sink, "bytes_written", 0),
            wall_seconds=elapsed,
            arch=self.arch,
            pid=self.pid,
        )


def _discard(records):
    pass


def trace_process(config: TraceConfig, sink=None) -> RunResult:
    """Run ``config.command`` to completion under syscall tracing.

    Profile records go to ``sink`` if given, else to ``config.output_path``
    (when set).  Raises :class:`LaunchError` if the target cannot start and
    :class:`TracerDesyncError` (carrying the partial result) on a broken
    stop sequence.
    """
    path = _resolve(config.command[0])
    own_sink = None
    if sink is None and config.output_path:
        sink = own_sink = FileSink(config.output_path)
    elif sink is None:
        sink = _discard
    session = _Session(config, sink)
    t0 = time.perf_counter()
    try:
        session.start(path, config.command)
        try:
            session.run()
        except TracerDesyncError as exc:
            log.error("tracer desync: %s", exc)
            session.abort()
            session.launch_failure()
            exc.result = session.result(sink, time.perf_counter() - t0)
            raise
        elapsed = time.perf_counter() - t0
        errno_ = session.launch_failure()
        if errno_ is not None:
            raise LaunchError(errno_, f"{config.command[0]}: {os.strerror(errno_)}")
        return session.result(sink, elapsed)
    except LaunchError:
        if own_sink is not None:
            own_sink.close()
            os.unlink(config.output_path)
            own_sink = None
        raise
    finally:
        if own_sink is not None:
            own_sink.close()
