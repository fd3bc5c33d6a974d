"""Per-thread syscall time profiler built on entry/exit timers."""

__version__ = "0.1.0"
