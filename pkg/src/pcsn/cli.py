"""Command-line front end: ``pcsn <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 mathematical failure
(no root, step undefined, check not applicable), 3 budget exhausted.
"""
from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import analysis as an
from .anf import SingularError, load_anf
from .linearize import secant_linearize, tangent_linearize
from .newton import OrderEstimateError, order_estimate, secant_newton, tangent_newton
from .plsolve import S_CAP, NoRootError, PlSolveError, enumerate_roots, newton_operator, pl_newton
from .jsonio import dumps
from .tape import DomainError, TapeError, load_tape

EXIT_OK, EXIT_INPUT, EXIT_MATH, EXIT_BUDGET = 0, 1, 2, 3


class InputError(ValueError):
    pass


def _emit(obj, path=None):
    text = dumps(obj)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def parse_vector(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise InputError(f"cannot parse vector {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise InputError(f"vector {text!r} must hold finite numbers")
    return np.array(vals)


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _dim_check(x, n, name):
    if x.size != n:
        raise InputError(f"{name} has {x.size} entries, expected {n}")


# --- subcommands -------------------------------------------------------------

def cmd_linearize(args) -> int:
    tape = load_tape(args.tape)
    if (args.at is None) == (args.secant is None):
        raise InputError("give exactly one of --at or --secant")
    if args.at is not None:
        x = parse_vector(args.at)
        _dim_check(x, tape.n, "--at")
        anf = tangent_linearize(tape, x)
    else:
        parts = args.secant.split(";")
        if len(parts) != 2:
            raise InputError("--secant expects 'x_check;x_hat'")
        a, b = parse_vector(parts[0]), parse_vector(parts[1])
        _dim_check(a, tape.n, "x_check")
        _dim_check(b, tape.n, "x_hat")
        anf = secant_linearize(tape, a, b)
    _emit(anf.to_dict(), args.output)
    n, m, s = anf.dims
    print(f"n={n} m={m} s={s}", file=sys.stderr if args.output is None else sys.stdout)
    return EXIT_OK


def cmd_solve(args) -> int:
    anf = load_anf(args.anf)
    start = np.zeros(anf.n) if args.start is None else parse_vector(args.start)
    _dim_check(start, anf.n, "--start")
    if args.mode == "enumerate":
        rep = enumerate_roots(anf, s_cap=args.s_cap)
        out = rep.to_dict()
        if anf.s <= args.s_cap and rep.roots:
            out["orientation"] = an.coherent_orientation(anf, args.s_cap).status
            try:
                out["stably_bijective"] = an.stable_bijectivity(anf, args.s_cap).stable
            except (SingularError, ValueError):
                out["stably_bijective"] = None
    elif args.mode == "pl-newton":
        rep = pl_newton(anf, start, budget=args.budget)
        out = rep.to_dict()
    else:
        step = newton_operator(anf, start, s_cap=args.s_cap, budget=args.budget)
        rep = step.report
        out = rep.to_dict()
        out["x"] = step.x
        out["tie"] = step.tie
    _emit(out, args.output)
    if rep.status == "budget-exceeded":
        return EXIT_BUDGET
    return EXIT_OK if rep.roots else EXIT_MATH


def cmd_analyze(args) -> int:
    anf = load_anf(args.anf)
    check = args.check
    if check == "signatures":
        out = {"feasible": [s.tolist() for s in an.feasible_signatures(anf, args.s_cap)]}
    elif check == "coherent":
        out = an.coherent_orientation(anf, args.s_cap).to_dict()
    elif check == "switched":
        out = {"totally_switched": an.totally_switched(anf)}
    elif check == "stable":
        res = an.stable_bijectivity(anf, args.s_cap)
        out = {"stable": res.stable,
               "witness": None if res.witness is None else res.witness.tolist(),
               "det": res.det,
               "dets": [{"signature": s.tolist(), "det": d} for s, d in res.dets]}
    elif check == "degree":
        y = None if args.y is None else parse_vector(args.y)
        out = {"degree": an.degree(anf, y, args.s_cap, seed=args.seed)}
    elif check == "homeo":
        out = {"homeomorphism": an.homeomorphism_check(anf, args.s_cap, seed=args.seed)}
    else:
        if args.gamma is None:
            raise InputError("--check radius needs --gamma")
        c = an.metric_regularity_constant(anf, args.s_cap)
        r = an.convergence_radius(c, args.gamma, args.r_tilde, args.rho, args.radius_mode)
        out = {"c": r.c, "gamma": r.gamma, "radius": r.R, "mode": r.mode}
    _emit(out, args.output)
    return EXIT_OK


def cmd_newton(args) -> int:
    tape = load_tape(args.tape)
    x0 = parse_vector(args.x0)
    _dim_check(x0, tape.n, "--x0")
    kw = dict(tol=args.tol, max_iters=args.max_iters, strategy=args.strategy, s_cap=args.s_cap)
    if args.secant:
        if args.x1 is None:
            raise InputError("--secant needs --x1")
        x1 = parse_vector(args.x1)
        _dim_check(x1, tape.n, "--x1")
        trace = secant_newton(tape, x0, x1, **kw)
    else:
        trace = tangent_newton(tape, x0, **kw)
    if args.output:
        if args.output.endswith(".json"):
            trace.write_json(args.output)
        else:
            trace.write_csv(args.output)
    try:
        order = order_estimate(trace, tape) if trace.converged else None
    except OrderEstimateError:
        order = None
    _emit({"status": trace.status, "x": trace.x, "residual": trace.residuals[-1],
           "iterations": trace.newton_steps, "order": order, "message": trace.message})
    if trace.status in ("converged", "stalled"):
        return EXIT_OK
    if trace.status == "max-iters":
        return EXIT_BUDGET
    return EXIT_MATH


def cmd_cardio(args) -> int:
    from .cardio import CardioParams, CardioModel, simulate, summarize, wiggers_export, write_stats
    params = CardioParams.load(args.params)
    model = CardioModel(params)
    T = args.T if args.T is not None else 2.0 * params.t_h
    traj = simulate(model, T=T, h=args.h, tol=args.tol)
    summary = summarize(traj, model)
    if args.out:
        wiggers_export(traj, args.out)
    if args.stats:
        write_stats(args.stats, {args.h: summary})
    _emit({"h": args.h, "T": T, **summary})
    return EXIT_OK


# --- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcsn", description="Piecewise linearization and generalized Newton toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("linearize", help="tangent or secant abs-normal form of a tape")
    q.add_argument("tape")
    q.add_argument("--at", help="reference point, comma separated")
    q.add_argument("--secant", help="'x_check;x_hat'")
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_linearize)

    q = sub.add_parser("solve", help="solve a square piecewise linear system")
    q.add_argument("anf")
    q.add_argument("--start")
    q.add_argument("--mode", choices=("pl-newton", "enumerate", "operator"), default="operator")
    q.add_argument("--budget", type=_positive(int), default=50)
    q.add_argument("--s-cap", type=_positive(int), default=S_CAP)
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("analyze", help="solvability diagnostics")
    q.add_argument("anf")
    q.add_argument("--check", required=True,
                   choices=("signatures", "coherent", "switched", "stable", "degree", "homeo", "radius"))
    q.add_argument("--y", help="value for --check degree")
    q.add_argument("--gamma", type=_positive(float))
    q.add_argument("--radius-mode", choices=("global", "contractivity", "stable_bijective"), default="global")
    q.add_argument("--r-tilde", type=_positive(float))
    q.add_argument("--rho", type=_positive(float))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--s-cap", type=_positive(int), default=S_CAP)
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_analyze)

    q = sub.add_parser("newton", help="tangent or secant generalized Newton")
    q.add_argument("tape")
    q.add_argument("--x0", required=True)
    q.add_argument("--secant", action="store_true")
    q.add_argument("--x1")
    q.add_argument("--tol", type=_positive(float))
    q.add_argument("--max-iters", type=_positive(int), default=50)
    q.add_argument("--strategy", choices=("auto", "pl-newton"), default="auto")
    q.add_argument("--s-cap", type=_positive(int), default=S_CAP)
    q.add_argument("-o", "--output", help="trace file (.csv or .json)")
    q.set_defaults(func=cmd_newton)

    q = sub.add_parser("cardio", help="implicit Euler run of the circulation model")
    q.add_argument("--params", help="parameter JSON (default: shipped values)")
    q.add_argument("--h", type=_positive(float), default=1e-3)
    q.add_argument("--T", type=_positive(float), help="simulated time [s] (default: two heart periods)")
    q.add_argument("--tol", type=_positive(float))
    q.add_argument("--out", help="trajectory CSV")
    q.add_argument("--stats", help="stats JSON")
    q.set_defaults(func=cmd_cardio)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .cardio import ParamsError, SimulationError
    try:
        return args.func(args)
    except (InputError, TapeError, ParamsError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoRootError, SingularError, DomainError, SimulationError, an.AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH
    except PlSolveError as exc:
        # enumeration cap exceeded
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
