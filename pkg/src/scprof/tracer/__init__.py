from .probe import emit_probe_script
from .session import (
    LaunchError,
    RunResult,
    StopClassifier,
    StopKind,
    TraceConfig,
    TraceeState,
    TracerDesyncError,
    classify_stop,
    trace_process,
)

__all__ = [
    "LaunchError",
    "RunResult",
    "StopClassifier",
    "StopKind",
    "TraceConfig",
    "TraceeState",
    "TracerDesyncError",
    "classify_stop",
    "emit_probe_script",
    "trace_process",
]
