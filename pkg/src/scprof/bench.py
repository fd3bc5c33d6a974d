"""Vanilla-vs-profiled timing of the two benchmark workloads."""
from __future__ import annotations

import logging
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from typing import Optional

from .analyzer import OverheadRow, RunSample, overhead_stats, vanilla_only
from .tracer import TraceConfig, trace_process
from .workloads import pi, raytrace

log = logging.getLogger(__name__)

BENCHMARKS = ("pi", "raytrace")


class BenchmarkError(RuntimeError):
    pass


@dataclass
class BenchSpec:
    name: str
    threads: int = 0
    repetitions: int = 10
    intervals: int = 50_000
    width: int = 256
    height: int = 192
    spp: int = 4
    image_path: Optional[str] = None
    scene_path: Optional[str] = None

    def __post_init__(self):
        if self.name not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.name!r}")
        if self.threads == 0:
            self.threads = os.cpu_count() or 1
        for attr in ("threads", "repetitions", "intervals", "width", "height", "spp"):
            if getattr(self, attr) < 1:
                raise ValueError(f"{attr} must be >= 1")

    def command(self, image_path: str) -> list[str]:
        base = [sys.executable, "-m", f"scprof.workloads.{self.name}", "--threads", str(self.threads)]
        if self.name == "pi":
            return base + ["--intervals", str(self.intervals)]
        cmd = base + ["--output", image_path, "--width", str(self.width),
                      "--height", str(self.height), "--spp", str(self.spp)]
        if self.scene_path:
            cmd += ["--scene", self.scene_path]
        return cmd


def bench_pi(spec: BenchSpec) -> tuple[float, RunSample]:
    """In-process run of the pi reduction."""
    if spec.name != "pi":
        raise ValueError("bench_pi needs a pi spec")
    t0 = time.perf_counter()
    estimate = pi.compute_pi(spec.intervals, spec.threads)
    return estimate, RunSample(time.perf_counter() - t0)


def bench_raytrace(spec: BenchSpec) -> RunSample:
    """In-process render, including the scene read and the image write."""
    if spec.name != "raytrace":
        raise ValueError("bench_raytrace needs a raytrace spec")
    if not spec.image_path:
        raise ValueError("raytrace spec needs image_path")
    t0 = time.perf_counter()
    raytrace.run(spec.scene_path, spec.image_path, spec.width, spec.height, spec.spp, spec.threads)
    return RunSample(time.perf_counter() - t0)


def _run_vanilla(cmd: list[str]) -> RunSample:
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
    elapsed = time.perf_counter() - t0
    if proc.returncode != 0:
        raise BenchmarkError(f"{' '.join(cmd)} exited with {proc.returncode}: {proc.stderr.decode(errors='replace')}")
    return RunSample(elapsed)


def _run_profiled(cmd: list[str], profiler: TraceConfig, out_path: str) -> tuple[RunSample, int]:
    config = TraceConfig(
        cmd,
        buffer_capacity=profiler.buffer_capacity,
        follow_threads=profiler.follow_threads,
        output_path=out_path,
    )
    result = trace_process(config)
    if result.returncode != 0:
        raise BenchmarkError(f"{' '.join(cmd)} exited with {result.returncode} under the profiler")
    return RunSample(result.wall_seconds, result.trace_bytes), result.missed


def run_experiment(spec: BenchSpec, profiler: Optional[TraceConfig] = None) -> OverheadRow:
    """``spec.repetitions`` vanilla and profiled runs, interleaved.

    Without a profiler only the vanilla arm runs.  The profile of the last
    profiled run is kept at ``profiler.output_path`` when that is set.
    """
    vanilla: list[RunSample] = []
    profiled: list[RunSample] = []
    missed = 0
    with tempfile.TemporaryDirectory(prefix="scprof-bench-") as tmp:
        image = spec.image_path or os.path.join(tmp, "image.ppm")
        cmd = spec.command(image)
        prof_path = os.path.join(tmp, "run.prof")
        for rep in range(spec.repetitions):
            vanilla.append(_run_vanilla(cmd))
            if profiler is not None:
                sample, run_missed = _run_profiled(cmd, profiler, prof_path)
                profiled.append(sample)
                missed += run_missed
            log.info("%s rep %d/%d done", spec.name, rep + 1, spec.repetitions)
        if profiler is not None and profiler.output_path:
            os.replace(prof_path, profiler.output_path)
    if profiler is None:
        return vanilla_only(vanilla, spec.name)
    row = overhead_stats(vanilla, profiled, spec.name)
    row.missed = missed
    return row
