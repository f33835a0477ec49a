"""Closed-loop circulation benchmark."""
from .model import (
    CHAMBERS, COMPARTMENTS, LARGE, MASS, SMALL, VALVES, CardioModel, CardioParams,
    ParamsError, build_model, cutoff, default_params, elastance, implicit_euler_residual,
    reduced_time,
)
from .simulate import (
    WIGGERS_COLUMNS, SimulationError, StepStats, Trajectory, period_mismatch, simulate,
    step_histogram, summarize, wiggers_export, write_stats,
)

__all__ = [
    "CHAMBERS", "COMPARTMENTS", "LARGE", "MASS", "SMALL", "VALVES", "CardioModel",
    "CardioParams", "ParamsError", "build_model", "cutoff", "default_params", "elastance",
    "implicit_euler_residual", "reduced_time", "WIGGERS_COLUMNS", "SimulationError",
    "StepStats", "Trajectory", "period_mismatch", "simulate", "step_histogram", "summarize",
    "wiggers_export", "write_stats",
]
