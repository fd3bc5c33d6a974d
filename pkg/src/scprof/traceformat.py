"""Reader and writer for the per-TID profile text format.

Layout of one thread section::

    ----- TID 40739 -----
    call                    | time
    ---------------------------------
    STaKTAU application     | 1680935665984544508
    set_robust_list         | 4760
    futex                   | 17912269

The first data row carries the thread's wall-clock start (epoch ns), every
following row the total nanoseconds spent in one syscall, in order of first
occurrence.  With ``counts=True`` a third ``| count`` column is added; the
parser accepts either form and any amount of whitespace around ``|``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .core import SyscallStat, ThreadProfile

APP_ROW = "STaKTAU application"
NAME_WIDTH = 24
RULE = "-" * 33

_HEADER_RE = re.compile(r"^-+ TID (\d+) -+$")


class ProfileParseError(ValueError):
    def __init__(self, lineno: int, message: str, source: str = "<text>"):
        self.lineno = lineno
        self.source = source
        super().__init__(f"{source}:{lineno}: {message}")


@dataclass
class ProfileDocument:
    threads: list[ThreadProfile] = field(default_factory=list)

    def __post_init__(self):
        tids = [t.tid for t in self.threads]
        if len(set(tids)) != len(tids):
            raise ValueError("duplicate tid in profile document")
        self.threads.sort(key=lambda t: t.tid)

    @classmethod
    def from_profiles(cls, profiles: Iterable[ThreadProfile]) -> "ProfileDocument":
        return cls(list(profiles))

    def thread(self, tid: int) -> ThreadProfile:
        for t in self.threads:
            if t.tid == tid:
                return t
        raise KeyError(tid)


def _row(name: str, *values) -> str:
    return f"{name:<{NAME_WIDTH - 1}} | " + " | ".join(str(v) for v in values)


def section_lines(profile: ThreadProfile, counts: bool = False) -> Iterator[str]:
    yield f"----- TID {profile.tid} -----"
    yield _row("call", "time", "count") if counts else _row("call", "time")
    yield RULE
    start = profile.start_wall_ns if profile.start_wall_ns is not None else 0
    yield _row(APP_ROW, start)
    for name, stat in profile.per_syscall.items():
        if counts and stat.count is not None:
            yield _row(name, stat.total_ns, stat.count)
        else:
            yield _row(name, stat.total_ns)


def write_profile(doc: ProfileDocument, counts: bool = False) -> str:
    lines = []
    for profile in sorted(doc.threads, key=lambda t: t.tid):
        lines.extend(section_lines(profile, counts))
    return "".join(line + "\n" for line in lines)


def _int_field(text: str, lineno: int, what: str, source: str) -> int:
    text = text.strip()
    if not text.isdigit():
        raise ProfileParseError(lineno, f"non-numeric {what} {text!r}", source)
    return int(text)


def parse_profile(text: str, source: str = "<text>") -> ProfileDocument:
    threads: list[ThreadProfile] = []
    seen_tids: set[int] = set()
    current = None
    # 0: expect section header, 1: column header, 2: rule, 3: rows
    state = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _HEADER_RE.match(line)
        if m:
            if state in (1, 2):
                raise ProfileParseError(lineno, "section header before column header/rule", source)
            tid = int(m.group(1))
            if tid in seen_tids:
                raise ProfileParseError(lineno, f"duplicate TID {tid}", source)
            seen_tids.add(tid)
            current = ThreadProfile(tid)
            threads.append(current)
            state = 1
            continue
        if state == 0:
            raise ProfileParseError(lineno, f"expected '----- TID <n> -----', got {line!r}", source)
        if state == 1:
            cols = [c.strip() for c in line.split("|")]
            if cols[:2] != ["call", "time"] or cols[2:] not in ([], ["count"]):
                raise ProfileParseError(lineno, f"malformed column header {line!r}", source)
            state = 2
            continue
        if state == 2:
            if set(line) != {"-"}:
                raise ProfileParseError(lineno, "missing rule line", source)
            state = 3
            continue

        cols = [c.strip() for c in line.split("|")]
        if len(cols) not in (2, 3) or not cols[0]:
            raise ProfileParseError(lineno, f"malformed row {line!r}", source)
        name = cols[0]
        value = _int_field(cols[1], lineno, "time", source)
        count = None
        if len(cols) == 3 and cols[2]:
            count = _int_field(cols[2], lineno, "count", source)
        if name == APP_ROW:
            if current.start_wall_ns is not None:
                raise ProfileParseError(lineno, f"duplicate {APP_ROW!r} row", source)
            current.start_wall_ns = value
        elif name in current.per_syscall:
            raise ProfileParseError(lineno, f"duplicate syscall row {name!r}", source)
        else:
            current.per_syscall[name] = SyscallStat(value, count)
    if state in (1, 2):
        raise ProfileParseError(lineno, "truncated section", source)
    return ProfileDocument(threads)


def read_profile(path) -> ProfileDocument:
    with open(path, encoding="utf-8") as fh:
        return parse_profile(fh.read(), source=str(path))
