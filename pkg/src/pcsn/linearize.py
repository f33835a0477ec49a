"""Tangent and secant mode piecewise linearization of tapes.

Both modes share one propagation pass.  Every node carries a reference
value (the midpoint of its values at the two base points) and a gradient
row with respect to ``[x, |z|]``; ``abs`` nodes start a fresh ``|z|``
coordinate.  With coincident base points the pass is the tangent mode.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import qmc

from .anf import AbsNormalForm, anf_eval
from .tape import Tape, evaluate, evaluate_outputs

_DERIV = {
    "sin": math.cos,
    "cos": lambda v: -math.sin(v),
    "tan": lambda v: 1.0 + math.tan(v) ** 2,
    "exp": math.exp,
    "log": lambda v: 1.0 / v,
}


def _propagate(tape: Tape, x_lo, x_hi) -> AbsNormalForm:
    x_lo = np.asarray(x_lo, dtype=float).ravel()
    x_hi = np.asarray(x_hi, dtype=float).ravel()
    lo = evaluate(tape, x_lo).values
    hi = lo if np.array_equal(x_lo, x_hi) else evaluate(tape, x_hi).values
    mid = 0.5 * (lo + hi)
    x_ref = 0.5 * (x_lo + x_hi)

    n, s = tape.n, tape.s
    dim = n + s
    grads: list = [None] * len(tape)
    Z = np.zeros((s, dim))
    z_ref = np.zeros(s)
    w_ref = np.zeros(s)

    def scaled(g, a):
        return None if g is None or a == 0.0 else a * g

    def combine(g1, g2, sign=1.0):
        if g1 is None:
            return None if g2 is None else sign * g2
        if g2 is None:
            return g1
        return g1 + g2 if sign > 0 else g1 - g2

    for i, op in enumerate(tape.ops):
        a = tape.args[i]
        if op == "input":
            g = np.zeros(dim)
            g[tape.consts[i]] = 1.0
        elif op == "const":
            g = None
        elif op == "add":
            g = combine(grads[a[0]], grads[a[1]])
        elif op == "sub":
            g = combine(grads[a[0]], grads[a[1]], -1.0)
        elif op == "neg":
            g = scaled(grads[a[0]], -1.0)
        elif op == "mul":
            # exact for the two base points: midpoint values on both factors
            g = combine(scaled(grads[a[0]], mid[a[1]]), scaled(grads[a[1]], mid[a[0]]))
        elif op == "div":
            num, den = a
            inv_mid = 0.5 * (1.0 / lo[den] + 1.0 / hi[den])
            dinv = -1.0 / (lo[den] * hi[den])
            g = combine(scaled(grads[num], inv_mid), scaled(grads[den], mid[num] * dinv))
        elif op == "abs":
            k = tape.abs_slot(i)
            gj = grads[a[0]]
            if gj is not None:
                Z[k] = gj
            z_ref[k] = mid[a[0]]
            w_ref[k] = mid[i]
            g = np.zeros(dim)
            g[n + k] = 1.0
        else:
            j = a[0]
            if lo[j] == hi[j]:
                slope = _DERIV[op](mid[j])
            else:
                slope = (hi[i] - lo[i]) / (hi[j] - lo[j])
            g = scaled(grads[j], slope)
        grads[i] = g

    ref = np.concatenate([x_ref, w_ref])
    c = z_ref - Z @ ref
    m = tape.m
    JY = np.zeros((m, dim))
    for r, o in enumerate(tape.outputs):
        if grads[o] is not None:
            JY[r] = grads[o]
    b = mid[list(tape.outputs)] - JY @ ref
    return AbsNormalForm(c, b, Z[:, :n], Z[:, n:], JY[:, :n], JY[:, n:])


def tangent_linearize(tape: Tape, x_ref) -> AbsNormalForm:
    """ANF of the tangent mode piecewise linearization at ``x_ref``."""
    x_ref = np.asarray(x_ref, dtype=float).ravel()
    return _propagate(tape, x_ref, x_ref)


def secant_linearize(tape: Tape, x_check, x_hat) -> AbsNormalForm:
    """ANF of the secant mode piecewise linearization through two points.

    The model is exact at both points and equals the tangent model when
    they coincide.
    """
    return _propagate(tape, x_check, x_hat)


def model_error(tape: Tape, anf: AbsNormalForm, x) -> float:
    return float(np.linalg.norm(evaluate_outputs(tape, x) - anf_eval(anf, x)[0]))


def estimate_gamma(tape: Tape, lower, upper, samples: int = 16, seed: int = 0) -> float:
    """Empirical second-order constant on the box ``[lower, upper]``.

    Reference points are scrambled Halton samples; the model built at each
    one is checked at every other sample and at all pairwise midpoints.
    Probes closer than ``1e-6`` box diameters to the reference point are
    skipped, since there the quotient only measures rounding noise.
    The result is a lower bound on any valid constant for the box.
    """
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    if lower.size != tape.n or upper.size != tape.n:
        raise ValueError("box dimension does not match tape")
    if samples < 2:
        raise ValueError("need at least two samples")
    if np.any(upper < lower) or np.all(upper == lower):
        raise ValueError("empty region")
    pts = qmc.Halton(d=tape.n, scramble=True, seed=seed).random(samples)
    pts = lower + pts * (upper - lower)
    mids = [0.5 * (pts[i] + pts[j]) for i in range(samples) for j in range(i + 1, samples)]
    probes = np.vstack([pts, np.array(mids)]) if mids else pts
    values = [evaluate_outputs(tape, p) for p in probes]

    min_dist2 = (1e-6 * float(np.linalg.norm(upper - lower))) ** 2
    gamma = 0.0
    any_pair = False
    for x_ref in pts:
        anf = tangent_linearize(tape, x_ref)
        for p, fp in zip(probes, values):
            dist2 = float(np.sum((p - x_ref) ** 2))
            if dist2 <= min_dist2:
                continue
            any_pair = True
            err = np.linalg.norm(fp - anf_eval(anf, p)[0])
            gamma = max(gamma, 2.0 * err / dist2)
    if not any_pair:
        raise ValueError("all samples coincide")
    return gamma
