import os
import sys
from pathlib import Path

import pytest

from scprof.core import SyscallStat, ThreadProfile
from scprof.traceformat import ProfileDocument

DATA = Path(__file__).parent / "data"
HELPERS = Path(__file__).parent / "helpers"


def _ptrace_works() -> bool:
    from scprof.tracer import TraceConfig, trace_process

    try:
        trace_process(TraceConfig(["/bin/true"]))
    except OSError:
        return False
    return True


needs_ptrace = pytest.mark.skipif(not sys.platform.startswith("linux"), reason="ptrace backend is Linux-only")


@pytest.fixture(scope="session")
def ptrace_ok():
    if not _ptrace_works():
        pytest.skip("ptrace is not permitted in this environment")


def excerpt_document() -> ProfileDocument:
    """The two-thread listing, typed in by hand from the reference listing."""
    main = ThreadProfile(40705, start_wall_ns=1680935665981760030)
    for name, ns in [
        ("rt_sigsuspend", 246097),
        ("rt_sigaction", 5492),
        ("rt_sigprocmask", 223200),
        ("alarm", 3282),
        ("execve", 417912),
        ("brk", 8862),
        ("arch_prctl", 4727),
        ("mmap2", 256817),
        ("access", 9123),
        ("openat", 37108),
        ("fstatat", 24482),
        ("close", 8693),
        ("read", 7813),
        ("pread", 11211),
        ("set_tid_address", 2383),
        ("set_robust_list", 2165),
        ("mprotect", 251824),
        ("prlimit64", 3368),
        ("munmap", 11140),
        ("getrandom", 3069),
        ("getdents", 23968),
        ("sched_getaffinity", 3931),
        ("futex", 12486935),
        ("write", 505633),
    ]:
        main.per_syscall[name] = SyscallStat(ns, None)
    worker = ThreadProfile(40739, start_wall_ns=1680935665984544508)
    for name, ns in [("set_robust_list", 4760), ("rt_sigprocmask", 4213), ("futex", 17912269)]:
        worker.per_syscall[name] = SyscallStat(ns, None)
    return ProfileDocument([main, worker])


@pytest.fixture
def excerpt_doc():
    return excerpt_document()


@pytest.fixture
def excerpt_text():
    return (DATA / "reference_listing.prof").read_text()


def helper_cmd(k: int, m: int, t: int, report=None) -> list[str]:
    cmd = [sys.executable, "-I", "-S", str(HELPERS / "syscall_script.py"), str(k), str(m), str(t)]
    if report:
        cmd.append(str(report))
    return cmd


def write_helper(tmp_path, n=5):
    """A tiny program that issues exactly ``n`` write syscalls."""
    path = tmp_path / "writes.py"
    path.write_text(
        "import os\n"
        "fd = os.open(os.devnull, os.O_WRONLY)\n"
        f"for _ in range({n}):\n"
        "    os.write(fd, b'x')\n"
    )
    return [sys.executable, "-I", "-S", str(path)]


@pytest.fixture
def clean_env(monkeypatch):
    monkeypatch.delenv("STAKTAU_OUTPUT", raising=False)
    return os.environ


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
