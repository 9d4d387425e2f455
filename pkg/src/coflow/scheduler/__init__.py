from .loop import (
    DualBundle,
    InitializationError,
    SolveError,
    SolverOptions,
    Trace,
    TraceRecord,
    find_initial_feasible,
    inner_ccp,
    solve_opwhf,
    solve_separate,
)
from .programs import build_ohf_c, build_opf_c, build_owf_c
from .result import ScheduleResult

__all__ = [
    "DualBundle",
    "InitializationError",
    "SolveError",
    "SolverOptions",
    "Trace",
    "TraceRecord",
    "ScheduleResult",
    "find_initial_feasible",
    "inner_ccp",
    "solve_opwhf",
    "solve_separate",
    "build_opf_c",
    "build_owf_c",
    "build_ohf_c",
]
