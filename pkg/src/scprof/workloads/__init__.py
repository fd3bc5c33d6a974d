"""Benchmark programs run as separate processes by :mod:`scprof.bench`."""
