"""Fixed-step implicit Euler integration of the circulation model."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..jsonio import dump
from ..newton import tangent_newton
from .model import IDX, NC, VALVES, CardioModel

# columns of the left/right heart pressure-volume-flow export
WIGGERS_COLUMNS = ("t", "p_la", "p_lv", "p_sa1", "v_lv", "q_MV", "q_AV",
                   "p_ra", "p_rv", "p_pa1", "v_rv", "q_TV", "q_PV", "kink")
_SOURCES = {
    "p_la": ("p", "la"), "p_lv": ("p", "lv"), "p_sa1": ("p", "sa1"), "v_lv": ("v", "lv"),
    "q_MV": ("q", "la"), "q_AV": ("q", "lv"), "p_ra": ("p", "ra"), "p_rv": ("p", "rv"),
    "p_pa1": ("p", "pa1"), "v_rv": ("v", "rv"), "q_TV": ("q", "ra"), "q_PV": ("q", "rv"),
}
_BLOCK = {"v": 0, "q": NC, "p": 2 * NC}


class SimulationError(RuntimeError):
    def __init__(self, step: int, t: float, residual: float, status: str):
        super().__init__(f"Newton failed at step {step} (t={t:.6g}): {status}, residual {residual:.3e}")
        self.step, self.t, self.residual, self.status = step, t, residual, status


@dataclass
class StepStats:
    step: int
    t: float
    newton_steps: int
    kink_crossings: list[int]
    transitioning: list[str]
    residual: float

    @property
    def kinks(self) -> int:
        return sum(self.kink_crossings)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    stats: list[StepStats] = field(default_factory=list)
    h: float = 0.0
    seconds: float = 0.0

    def column(self, block: str, name: str) -> np.ndarray:
        return self.states[:, _BLOCK[block] + IDX[name]]

    def total_volume(self) -> np.ndarray:
        return self.states[:, :NC].sum(axis=1)


def simulate(model: CardioModel, x_start=None, t0: float = 0.0, T: float = 1.6,
             h: float = 1e-3, tol: float | None = None, max_steps: int = 10_000_000,
             max_newton: int = 20) -> Trajectory:
    """Integrate over [t0, t0 + T] with N = round(T / h) implicit Euler steps.

    Each step runs tangent Newton on the step residual, warm-started at the
    previous state; the PL subproblems use the signature-switching solver.
    """
    if not h > 0 or not T > 0:
        raise ValueError("T and h must be positive")
    N = int(round(T / h))
    if N > max_steps:
        raise ValueError(f"{N} steps exceed the budget of {max_steps}")
    x = model.initial_state(t0) if x_start is None else np.asarray(x_start, dtype=float).copy()
    if x.shape != (model.n,):
        raise ValueError(f"state must have {model.n} entries")
    states = np.empty((N + 1, model.n))
    times = t0 + h * np.arange(N + 1)
    states[0] = x
    stats = []
    wall = time.perf_counter()
    for i in range(1, N + 1):
        t = float(times[i])
        tape = model.step_tape(x, t, h)
        trace = tangent_newton(tape, x, tol=tol, max_iters=max_newton, strategy="pl-newton")
        if not trace.converged:
            raise SimulationError(i, t, trace.residuals[-1], trace.status)
        x = trace.x
        states[i] = x
        stats.append(StepStats(i, t, trace.newton_steps, [s.kink_crossings for s in trace.steps],
                               model.transitioning(x), trace.residuals[-1]))
    return Trajectory(times, states, stats, h, time.perf_counter() - wall)


def step_histogram(traj: Trajectory) -> dict:
    counts = [s.newton_steps for s in traj.stats]
    return {
        "one_step": sum(c == 1 for c in counts),
        "two_step": sum(c == 2 for c in counts),
        "more": sum(c > 2 for c in counts),
    }


def summarize(traj: Trajectory, model: CardioModel) -> dict:
    vol = traj.total_volume()
    theta = [list(model.thetas(x).values()) for x in traj.states]
    counts = step_histogram(traj)
    return {
        **counts,
        "solves": len(traj.stats),
        "zero_step": sum(s.newton_steps == 0 for s in traj.stats),
        "max_kinks_per_solve": max((max(s.kink_crossings, default=0) for s in traj.stats), default=0),
        "steps_with_kinks": sum(s.kinks > 0 for s in traj.stats),
        "volume_drift": float(np.abs(vol - vol[0]).max() / vol[0]),
        "theta_min": float(np.min(theta)),
        "theta_max": float(np.max(theta)),
        "valve_transition_steps": {v: sum(v in s.transitioning for s in traj.stats)
                                   for v in VALVES.values()},
        "seconds": traj.seconds,
    }


def write_stats(path, runs: dict):
    """Write ``{h: summary}`` as JSON, keyed by the step size."""
    dump({f"{h:g}": summary for h, summary in runs.items()}, path)


def wiggers_export(traj: Trajectory, path):
    if len(traj.states) == 0:
        raise ValueError("empty trajectory")
    kink = [0] + [int(s.kinks > 0) for s in traj.stats]
    cols = [traj.times] + [traj.column(*_SOURCES[c]) for c in WIGGERS_COLUMNS[1:-1]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WIGGERS_COLUMNS)
        for r in range(len(traj.states)):
            w.writerow([f"{c[r]:.17g}" for c in cols] + [kink[r]])


def period_mismatch(traj: Trajectory, t_h: float, burn_in: int = 5) -> float:
    """Relative L-inf gap of p_lv between the two periods after ``burn_in`` periods."""
    per = int(round(t_h / traj.h))
    a0 = burn_in * per
    if len(traj.states) < a0 + 2 * per + 1:
        raise ValueError("trajectory too short for the requested periods")
    p = traj.column("p", "lv")
    first, second = p[a0:a0 + per], p[a0 + per:a0 + 2 * per]
    return float(np.abs(second - first).max() / np.abs(first).max())
