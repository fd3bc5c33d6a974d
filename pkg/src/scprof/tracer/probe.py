"""SystemTap rendering of the profiler, for hosts that have the kernel tooling.

The generated script keeps everything in the kernel: the entry probe stamps a
per-thread start time, the return probe adds the elapsed time to a
per-(thread, syscall) total, and finished thread sections are queued in a
fixed-size line buffer that is printed when it fills up and at ``end``.  The
output uses the same layout as :mod:`scprof.traceformat`.
"""
from __future__ import annotations

import shlex
from string import Template

_SCRIPT = Template(r"""# Per-thread syscall time profile.
#   stap -o profile.txt THIS_SCRIPT -c $command
# Output sections match the scprof profile format ("----- TID <n> -----").

global BUFFER_CAPACITY = $capacity

global entry_ts[16384]      # tid -> ktime at syscall entry
global entry_name[16384]    # tid -> name of the open syscall
global start_wall[16384]    # tid -> epoch ns of the thread's first event
global total[16384]         # [tid, syscall] -> accumulated ns
global first_seen[16384]    # [tid, syscall] -> first-occurrence rank
global retired[16384]       # tid -> 1 once its section was queued
global rank

global buf[$capacity]
global nbuf

function flush_buffer() {
    for (i = 0; i < nbuf; i++)
        printf("%s\n", buf[i])
    delete buf
    nbuf = 0
}

function push(line:string) {
    buf[nbuf++] = line
    if (nbuf >= BUFFER_CAPACITY)
        flush_buffer()
}

function row:string(call:string, value:long) {
    return sprintf("%-23s | %d", call, value)
}

function retire(t:long) {
    if (t in retired || !(t in start_wall))
        return
    retired[t] = 1
    push(sprintf("----- TID %d -----", t))
    push(sprintf("%-23s | %s", "call", "time"))
    push("---------------------------------")
    push(row("STaKTAU application", start_wall[t]))
    foreach ([tt, call] in first_seen+) {
        if (tt == t)
            push(row(call, total[tt, call]))
    }
}

function close_open(t:long, now:long) {
    if (!(t in entry_ts))
        return
    call = entry_name[t]
    if (!([t, call] in first_seen))
        first_seen[t, call] = ++rank
    total[t, call] += now - entry_ts[t]
    delete entry_ts[t]
    delete entry_name[t]
}

probe syscall.* {
    if (pid() != target())
        next
    t = tid()
    now = ktime_get_ns()
    if (!(t in start_wall))
        start_wall[t] = gettimeofday_ns()
    close_open(t, now)
    entry_ts[t] = now
    entry_name[t] = name
    # exit and exit_group never reach the return probe
    if (name == "exit" || name == "exit_group") {
        close_open(t, now)
        retire(t)
    }
}

probe syscall.*.return {
    if (pid() != target())
        next
    t = tid()
    if (!(t in entry_ts))
        next
    close_open(t, ktime_get_ns())
}

probe end {
    now = ktime_get_ns()
    foreach (t in entry_ts)
        close_open(t, now)
    foreach (t+ in start_wall)
        retire(t)
    flush_buffer()
}
""")


def emit_probe_script(config) -> str:
    """Render the kernel-probe script for ``config`` (a :class:`TraceConfig`)."""
    capacity = int(config.buffer_capacity)
    command = shlex.join(config.command) if config.command else "PROGRAM"
    return _SCRIPT.substitute(
        capacity=capacity,
        command=shlex.quote(command),
    )
