import logging
import random
from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scprof.core import (
    Accumulator,
    Collector,
    FlushBuffer,
    Phase,
    SyscallEvent,
    finalize,
    replay,
)
from scprof.syscalls import syscall_number

NAMES = {0: "read", 1: "write", 35: "nanosleep", 202: "futex", 273: "set_robust_list", 14: "rt_sigprocmask"}


def namer(nr):
    return NAMES.get(nr, f"sys_{nr}")


def E(tid, nr, ts, wall=None):
    return SyscallEvent(tid, nr, Phase.ENTRY, ts, wall)


def X(tid, nr, ts):
    return SyscallEvent(tid, nr, Phase.EXIT, ts)


class ListSink:
    def __init__(self):
        self.batches = []

    def __call__(self, records):
        self.batches.append(list(records))

    @property
    def records(self):
        return [r for b in self.batches for r in b]


class FailingSink(ListSink):
    """Fails on the flush numbers listed in ``fail_on`` (0-based)."""

    def __init__(self, fail_on=()):
        super().__init__()
        self.fail_on = set(fail_on)
        self.calls = 0

    def __call__(self, records):
        n = self.calls
        self.calls += 1
        if n in self.fail_on:
            raise OSError("sink closed")
        super().__call__(records)


# -- ingest ---------------------------------------------------------------

def test_single_pair():
    acc = replay([E(7, 1, 100), X(7, 1, 350)], namer)
    stat = acc.profiles[7].per_syscall["write"]
    assert (stat.total_ns, stat.count) == (250, 1)


def test_orphan_exit_on_fresh_state():
    acc = replay([X(7, 0, 50)], namer)
    assert acc.profiles == {}
    assert acc.orphan_exits == 1


def test_mismatched_exit_attributed_to_entry_syscall():
    acc = replay([E(1, 0, 10), X(1, 1, 30)], namer)
    assert acc.mismatches == 1
    assert list(acc.profiles[1].per_syscall) == ["read"]
    assert acc.profiles[1].per_syscall["read"].total_ns == 20


def test_entry_while_open_closes_previous():
    acc = replay([E(1, 0, 10), E(1, 1, 40), X(1, 1, 45)], namer)
    p = acc.profiles[1].per_syscall
    assert p["read"].total_ns == 30
    assert p["write"].total_ns == 5
    assert acc.mismatches == 1


def test_timestamps_must_not_go_backwards():
    acc = Accumulator(namer)
    acc.ingest(E(1, 0, 100))
    with pytest.raises(ValueError):
        acc.ingest(X(1, 0, 99))


def test_first_event_sets_wall_and_window():
    acc = replay([E(3, 0, 1000, wall=1680935665984544508), X(3, 0, 1100), E(3, 1, 1200), X(3, 1, 1500)], namer)
    p = acc.profiles[3]
    assert p.start_wall_ns == 1680935665984544508
    assert p.first_entry_mono == 1000
    assert p.last_exit_mono == 1500
    assert p.total_ns == 400 <= p.window_ns


def _brute_force_totals(events):
    """Independent per-(tid, name) sums: pair each exit with the latest entry."""
    open_at = {}
    totals = defaultdict(int)
    for ev in events:
        if ev.phase is Phase.ENTRY:
            open_at[ev.tid] = ev
        else:
            entry = open_at.pop(ev.tid)
            totals[ev.tid, namer(entry.syscall)] += ev.ts_mono - entry.ts_mono
    return dict(totals)


def test_futex_total_matches_excerpt_row():
    # any positive split of the reference worker-thread futex total
    futex = 202
    durations = [4_760, 4_213, 17_903_296]
    events, ts = [], 1_000
    for d in durations:
        events += [E(40739, futex, ts), X(40739, futex, ts + d)]
        ts += d + 500
    acc = replay(events, namer)
    oracle = _brute_force_totals(events)
    assert oracle[40739, "futex"] == 17_912_269
    stat = acc.profiles[40739].per_syscall["futex"]
    assert (stat.total_ns, stat.count) == (17_912_269, 3)
    assert list(acc.profiles[40739].per_syscall) == ["futex"]


@pytest.mark.parametrize("seed", range(5))
def test_pairing_against_brute_force(seed):
    rng = random.Random(seed)
    streams = {}
    for tid in range(1, 9):
        ts, evs = rng.randrange(1000), []
        for _ in range(rng.randrange(1, 40)):
            nr = rng.choice(list(NAMES))
            ts += rng.randrange(0, 50)
            evs.append(E(tid, nr, ts))
            ts += rng.randrange(0, 500)
            evs.append(X(tid, nr, ts))
        streams[tid] = evs
    merged = []
    cursors = {tid: 0 for tid in streams}
    while cursors:
        tid = rng.choice(list(cursors))
        merged.append(streams[tid][cursors[tid]])
        cursors[tid] += 1
        if cursors[tid] == len(streams[tid]):
            del cursors[tid]
    acc = replay(merged, namer)
    got = {(tid, n): s.total_ns for tid, p in acc.profiles.items() for n, s in p.per_syscall.items()}
    assert got == _brute_force_totals(merged)


@st.composite
def alternating_streams(draw):
    n_tids = draw(st.integers(1, 6))
    out = []
    for tid in range(1, n_tids + 1):
        ts = draw(st.integers(0, 10**6))
        for _ in range(draw(st.integers(0, 8))):
            nr = draw(st.sampled_from(sorted(NAMES)))
            ts += draw(st.integers(0, 10**4))
            out.append(E(tid, nr, ts))
            ts += draw(st.integers(0, 10**6))
            out.append(X(tid, nr, ts))
    order = draw(st.permutations(range(len(out))))
    # stable merge: keep each tid's own order, interleave tids arbitrarily
    by_tid = defaultdict(list)
    for ev in out:
        by_tid[ev.tid].append(ev)
    keys = [out[i].tid for i in order]
    merged = [by_tid[k].pop(0) for k in keys]
    return merged


@settings(max_examples=200, deadline=None)
@given(alternating_streams())
def test_pairing_property(events):
    acc = replay(events, namer)
    got = {(tid, n): s.total_ns for tid, p in acc.profiles.items() for n, s in p.per_syscall.items()}
    assert got == _brute_force_totals(events)
    for p in acc.profiles.values():
        assert p.total_ns <= p.window_ns
        assert all(s.total_ns >= 0 and s.count >= 1 for s in p.per_syscall.values())


@settings(max_examples=100, deadline=None)
@given(alternating_streams())
def test_ingest_is_deterministic(events):
    a, b = replay(events, namer), replay(events, namer)
    assert a.profiles == b.profiles
    assert [list(p.per_syscall) for p in a.profiles.values()] == [list(p.per_syscall) for p in b.profiles.values()]


def test_default_namer_uses_host_table():
    acc = replay([E(1, syscall_number("x86_64", "write"), 0), X(1, syscall_number("x86_64", "write"), 5)])
    assert "write" in acc.profiles[1].per_syscall


# -- flush buffer ---------------------------------------------------------

def test_push_below_capacity_does_not_flush():
    sink = ListSink()
    buf = FlushBuffer(2).push("r1", sink)
    assert buf.pending == ["r1"]
    assert sink.batches == []


def test_push_to_capacity_flushes_in_order():
    sink = ListSink()
    buf = FlushBuffer(2)
    buf.push("r1", sink).push("r2", sink)
    assert sink.batches == [["r1", "r2"]]
    assert buf.pending == []


def test_default_capacity_5000_records():
    sink = ListSink()
    buf = FlushBuffer()
    assert buf.capacity == 2048
    for i in range(5000):
        buf.push(i, sink)
    # 5000 = 2 * 2048 + 904
    assert [len(b) for b in sink.batches] == [2048, 2048]
    assert len(buf.pending) == 904
    assert buf.missed == 0
    assert sink.records == list(range(4096))


def test_failed_flush_counts_missed_and_warns(caplog):
    sink = FailingSink(fail_on={0})
    buf = FlushBuffer(3)
    with caplog.at_level(logging.WARNING):
        for i in range(7):
            buf.push(i, sink)
    assert buf.missed == 3
    assert sink.records == [3, 4, 5]
    assert buf.pending == [6]
    warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
    assert len(warnings) == 1 and "3" in warnings[0].getMessage()


def test_missing_sink_counts_missed():
    buf = FlushBuffer(1)
    buf.push("a", None)
    assert (buf.missed, buf.emitted) == (1, 0)


def test_capacity_must_be_positive():
    with pytest.raises(ValueError):
        FlushBuffer(0)


@settings(max_examples=300, deadline=None)
@given(
    capacity=st.integers(1, 16),
    ops=st.lists(st.sampled_from(["push", "flush"]), max_size=200),
    failures=st.sets(st.integers(0, 60)),
)
def test_conservation_property(capacity, ops, failures):
    sink = FailingSink(failures)
    buf = FlushBuffer(capacity)
    for op in ops:
        if op == "push":
            buf.push(object(), sink)
        else:
            buf.flush(sink)
        assert len(buf.pending) <= capacity
        assert buf.pushed == buf.emitted + buf.missed + len(buf.pending)
    buf.flush(sink)
    assert buf.pushed == buf.emitted + buf.missed


# -- finalize -------------------------------------------------------------

def test_finalize_closes_open_timer_at_session_end():
    sink = ListSink()
    col = Collector(FlushBuffer(), sink, namer=namer)
    col.ingest(E(5, 35, 10))
    profiles = finalize(col, 110)
    assert profiles[5].per_syscall["nanosleep"].total_ns == 100
    assert col.acc.forced_closures == 1


def test_finalize_empty_session():
    sink = ListSink()
    col = Collector(FlushBuffer(), sink, namer=namer)
    assert finalize(col, 0) == {}
    assert sink.batches == [[]]
    assert col.buffer.flushes == 1


def test_finalize_keeps_first_occurrence_order():
    stream = []
    ts = 0
    for nr, d in [(273, 4760), (14, 4213), (202, 17912269)]:
        stream += [E(40739, nr, ts), X(40739, nr, ts + d)]
        ts += d + 1
    sink = ListSink()
    col = Collector(FlushBuffer(), sink, namer=namer)
    for ev in stream:
        col.ingest(ev)
    profiles = finalize(col, ts)
    assert list(profiles[40739].per_syscall) == ["set_robust_list", "rt_sigprocmask", "futex"]
    assert sink.records[0] == "----- TID 40739 -----"
    assert sink.records[-1].split("|")[1].strip() == "17912269"


def test_finalize_flushes_regardless_of_fill_level():
    sink = ListSink()
    col = Collector(FlushBuffer(2048), sink, namer=namer)
    col.ingest(E(1, 0, 0))
    col.ingest(X(1, 0, 5))
    finalize(col, 10)
    assert col.buffer.pending == []
    assert len(sink.records) == 5  # header, column header, rule, app row, read


def test_retired_threads_are_not_emitted_twice():
    sink = ListSink()
    col = Collector(FlushBuffer(1), sink, namer=namer)
    col.ingest(E(1, 0, 0))
    col.ingest(X(1, 0, 5))
    col.retire(1)
    n = len(sink.records)
    finalize(col, 10)
    assert len(sink.records) == n
