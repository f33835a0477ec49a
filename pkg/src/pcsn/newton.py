"""Generalized Newton iterations on successive piecewise linearizations."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .jsonio import dump
from .linearize import secant_linearize, tangent_linearize
from .plsolve import S_CAP, NoRootError, newton_operator
from .tape import DomainError, Tape, evaluate_outputs


@dataclass
class StepInfo:
    signatures: int
    kink_crossings: int
    pl_iterations: int
    tie: bool
    seconds: float


@dataclass
class NewtonTrace:
    iterates: list[np.ndarray] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    steps: list[StepInfo] = field(default_factory=list)
    status: str = "max-iters"
    tol: float = 0.0
    message: str = ""

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def newton_steps(self) -> int:
        return len(self.steps)

    @property
    def kink_crossings(self) -> int:
        return sum(s.kink_crossings for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "tol": self.tol,
            "message": self.message,
            "iterates": [x.tolist() for x in self.iterates],
            "residuals": list(self.residuals),
            "steps": [vars(s) for s in self.steps],
        }

    def write_csv(self, path):
        n = self.iterates[0].size if self.iterates else 0
        # secant traces carry two seed iterates without a step
        offset = len(self.iterates) - len(self.steps)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter"] + [f"x{i}" for i in range(n)] + ["residual", "kinks"])
            for k, (x, r) in enumerate(zip(self.iterates, self.residuals)):
                kinks = self.steps[k - offset].kink_crossings if k >= offset else 0
                w.writerow([k] + [f"{v:.17g}" for v in x] + [f"{r:.17g}", kinks])

    def write_json(self, path):
        dump(self.to_dict(), path)


def _norm(v) -> float:
    return float(np.linalg.norm(v))


def _record_step(trace, tape, step, t0):
    x = step.x
    trace.iterates.append(x)
    trace.residuals.append(_norm(evaluate_outputs(tape, x)))
    rep = step.report
    trace.steps.append(StepInfo(len(rep.signatures), rep.kink_crossings, rep.iterations,
                                step.tie, time.perf_counter() - t0))


def _finish(trace, tol, tol_step) -> bool:
    if trace.residuals[-1] <= tol:
        trace.status = "converged"
        return True
    if len(trace.iterates) > 1 and _norm(trace.iterates[-1] - trace.iterates[-2]) <= tol_step:
        trace.status = "stalled"
        return True
    return False


def _defaults(tape, x0, tol, tol_step):
    f0 = _norm(evaluate_outputs(tape, x0))
    if tol is None:
        tol = 1e-10 * (1.0 + f0)
    if tol_step is None:
        tol_step = 1e-12 * (1.0 + _norm(x0))
    return f0, tol, tol_step


def tangent_newton(tape: Tape, x0, tol: float | None = None, max_iters: int = 50,
                   tol_step: float | None = None, strategy: str = "auto",
                   s_cap: int = S_CAP) -> NewtonTrace:
    """x_k = N(x_{k-1}) on the tangent model at x_{k-1}."""
    if tape.m != tape.n:
        raise ValueError("tangent_newton needs a square system")
    x = np.asarray(x0, dtype=float).ravel().copy()
    f0, tol, tol_step = _defaults(tape, x, tol, tol_step)
    trace = NewtonTrace([x], [f0], tol=tol)
    if f0 <= tol:
        trace.status = "converged"
        return trace
    for _ in range(max_iters):
        t0 = time.perf_counter()
        try:
            anf = tangent_linearize(tape, x)
            step = newton_operator(anf, x, s_cap=s_cap, strategy=strategy)
            _record_step(trace, tape, step, t0)
        except NoRootError as exc:
            trace.status, trace.message = "step-undefined", str(exc)
            return trace
        except DomainError as exc:
            trace.status, trace.message = "domain-error", str(exc)
            return trace
        x = step.x
        if _finish(trace, tol, tol_step):
            return trace
    trace.status = "max-iters"
    return trace


def secant_newton(tape: Tape, x0, x1, tol: float | None = None, max_iters: int = 50,
                  tol_step: float | None = None, strategy: str = "auto",
                  s_cap: int = S_CAP) -> NewtonTrace:
    """x_{k+1} = N on the secant model through (x_{k-1}, x_k), nearest to x_k."""
    if tape.m != tape.n:
        raise ValueError("secant_newton needs a square system")
    prev = np.asarray(x0, dtype=float).ravel().copy()
    x = np.asarray(x1, dtype=float).ravel().copy()
    f0, tol, tol_step = _defaults(tape, prev, tol, tol_step)
    trace = NewtonTrace([prev, x], [f0, _norm(evaluate_outputs(tape, x))], tol=tol)
    if trace.residuals[-1] <= tol:
        trace.status = "converged"
        return trace
    for _ in range(max_iters):
        t0 = time.perf_counter()
        try:
            anf = secant_linearize(tape, prev, x)
            step = newton_operator(anf, x, s_cap=s_cap, strategy=strategy)
            _record_step(trace, tape, step, t0)
        except NoRootError as exc:
            trace.status, trace.message = "step-undefined", str(exc)
            return trace
        except DomainError as exc:
            trace.status, trace.message = "domain-error", str(exc)
            return trace
        prev, x = x, step.x
        if _finish(trace, tol, tol_step):
            return trace
    trace.status = "max-iters"
    return trace


class OrderEstimateError(ValueError):
    pass


def order_from_errors(errors, floor: float = 1e-14) -> float:
    """Median of log(e_{k+1}) / log(e_k) over the last three usable ratios.

    Errors at or below ``floor`` are machine-precision noise and cut the
    tail.  When the error drops to exactly zero from a value above
    ``sqrt(floor)`` (faster than any quadratic step could explain) the
    root was hit in finitely many steps and ``inf`` is returned; the same
    holds for a drop below ``floor`` that leaves too few usable errors.
    """
    e = [float(v) for v in errors]
    jump = False
    for k in range(1, len(e)):
        if e[k] <= floor and e[k - 1] > math.sqrt(floor):
            if all(v == 0.0 for v in e[k:]):
                return math.inf
            jump = True
        if e[k] <= floor:
            break
    tail = [v for v in e if 0.0 < v < 1.0]
    usable = []
    for v in tail:
        if v <= floor:
            break
        usable.append(v)
    if len(usable) < 3:
        if jump:
            return math.inf
        raise OrderEstimateError("too few iterates with usable errors")
    for a, b in zip(usable, usable[1:]):
        if not b < a:
            raise OrderEstimateError("errors are not strictly decreasing")
    ratios = [math.log(b) / math.log(a) for a, b in zip(usable, usable[1:])]
    return float(np.median(ratios[-3:]))


def refine_root(tape: Tape, x, steps: int = 2, strategy: str = "auto") -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    for _ in range(steps):
        try:
            x = newton_operator(tangent_linearize(tape, x), x, strategy=strategy).x
        except NoRootError:
            break
    return x


def order_estimate(trace: NewtonTrace, tape: Tape | None = None, x_star=None) -> float:
    """Empirical convergence order of a Newton trace.

    The reference root is ``x_star`` when given, else the terminal iterate
    refined by two more tangent steps (when the tape is available).
    """
    if x_star is None:
        x_star = trace.x if tape is None else refine_root(tape, trace.x)
    x_star = np.asarray(x_star, dtype=float)
    errors = [_norm(x - x_star) for x in trace.iterates]
    scale = max(1.0, _norm(x_star))
    return order_from_errors(errors, floor=1e-14 * scale)
