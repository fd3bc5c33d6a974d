"""Midpoint-rule pi reduction over a freshly spawned thread team.

The arithmetic is trivial on purpose: most of a run is thread creation,
joining and the synchronisation in between.
"""
from __future__ import annotations

import argparse
import math
import sys
import threading


def _chunk_sum(lo: int, hi: int, h: float) -> float:
    return math.fsum(4.0 / (1.0 + ((i + 0.5) * h) ** 2) for i in range(lo, hi))


def compute_pi(intervals: int, threads: int = 1) -> float:
    if intervals < 1 or threads < 1:
        raise ValueError("intervals and threads must be >= 1")
    h = 1.0 / intervals
    threads = min(threads, intervals)
    bounds = [intervals * k // threads for k in range(threads + 1)]
    partial = [0.0] * threads

    def work(k):
        partial[k] = _chunk_sum(bounds[k], bounds[k + 1], h)

    team = [threading.Thread(target=work, args=(k,)) for k in range(threads)]
    for t in team:
        t.start()
    for t in team:
        t.join()
    return math.fsum(partial) * h


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--intervals", type=int, default=50_000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    estimate = compute_pi(args.intervals, args.threads)
    if args.verbose:
        print(f"pi ~= {estimate!r} (error {abs(estimate - math.pi):.3e})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
