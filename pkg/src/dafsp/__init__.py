"""Deadlock-free distributed assembly flowshop scheduling with a bounded assembly buffer."""

from .evaluator import EvalResult, Schedule, buffer_trace, evaluate, export_gantt
from .instance import Coding, CodingError, Instance, InstanceError, load_instance, make_instance
from .petri import DeadlockInfeasible, build_app, iba_safe, idam
from .solver import SolverParams, preset, solve

__all__ = [
    "Coding",
    "CodingError",
    "DeadlockInfeasible",
    "EvalResult",
    "Instance",
    "InstanceError",
    "Schedule",
    "SolverParams",
    "buffer_trace",
    "build_app",
    "evaluate",
    "export_gantt",
    "iba_safe",
    "idam",
    "load_instance",
    "make_instance",
    "preset",
    "solve",
]
