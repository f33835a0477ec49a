"""Solvers for piecewise linear systems ``ANF(x) = target``.

``enumerate_roots`` is the exhaustive oracle over all 2^s signatures,
``pl_newton`` the signature-switching production path, and
``newton_operator`` picks the root closest to a reference point.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anf import (
    RCOND_MIN, AbsNormalForm, all_signatures, anf_eval, rcond, resolve_zeros,
    selection_function,
)

S_CAP = 14


class PlSolveError(RuntimeError):
    pass


class NoRootError(PlSolveError):
    pass


@dataclass
class Root:
    x: np.ndarray
    signature: np.ndarray
    det_sign: int
    non_discrete: bool = False


@dataclass
class PlSolveReport:
    roots: list[Root] = field(default_factory=list)
    iterations: int = 0
    signatures: list[np.ndarray] = field(default_factory=list)
    status: str = "none"
    kink_crossings: int = 0
    residual: float = float("inf")
    singular: bool = False

    @property
    def root(self) -> np.ndarray | None:
        return self.roots[0].x if self.roots else None

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "kink_crossings": self.kink_crossings,
            "residual": self.residual,
            "singular": self.singular,
            "signatures": [s.tolist() for s in self.signatures],
            "roots": [
                {"x": r.x.tolist(), "signature": r.signature.tolist(),
                 "det_sign": r.det_sign, "non_discrete": r.non_discrete}
                for r in self.roots
            ],
        }


def residual_tol(anf: AbsNormalForm, target=None) -> float:
    rhs = anf.b if target is None else anf.b - np.asarray(target, dtype=float)
    return 1e-10 * (1.0 + np.abs(rhs).max(initial=0.0))


def _consistent(sigma, z) -> bool:
    tol = 1e-9 * (1.0 + np.abs(z).max(initial=0.0))
    return bool(np.all(sigma * z >= -tol))


@dataclass
class FixedSignatureResult:
    x: np.ndarray | None
    status: str  # root | infeasible | singular | non-discrete
    det_sign: int = 0
    z: np.ndarray | None = None


def solve_fixed_signature(anf: AbsNormalForm, sigma, target=None) -> FixedSignatureResult:
    """Solve the affine piece for ``sigma`` and keep it only if consistent."""
    if anf.m != anf.n:
        raise ValueError("square system required")
    sel = selection_function(anf, sigma)
    rhs = -sel.d if target is None else np.asarray(target, dtype=float) - sel.d
    tol = residual_tol(anf, target)
    tgt = np.zeros(anf.m) if target is None else np.asarray(target, dtype=float)
    if rcond(sel.A) < RCOND_MIN:
        # min-norm point of a consistent singular selection
        x, *_ = np.linalg.lstsq(sel.A, rhs, rcond=None)
        if np.abs(sel.A @ x - rhs).max(initial=0) > tol:
            return FixedSignatureResult(None, "singular")
        y, z = anf_eval(anf, x)
        if _consistent(sel.sigma, z) and np.abs(y - tgt).max(initial=0) <= tol:
            return FixedSignatureResult(x, "non-discrete", 0, z)
        return FixedSignatureResult(None, "singular")
    x = np.linalg.solve(sel.A, rhs)
    y, z = anf_eval(anf, x)
    det_sign = int(np.sign(np.linalg.det(sel.A)))
    if _consistent(sel.sigma, z) and np.abs(y - tgt).max(initial=0) <= tol:
        return FixedSignatureResult(x, "root", det_sign, z)
    return FixedSignatureResult(x, "infeasible", det_sign, z)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PCSN_THREADS", "1")))
    except ValueError:
        return 1


def enumerate_roots(anf: AbsNormalForm, s_cap: int = S_CAP, target=None) -> PlSolveReport:
    """All isolated roots over every +-1 signature (desk-scale oracle)."""
    if anf.s > s_cap:
        raise PlSolveError(f"s={anf.s} exceeds the enumeration cap {s_cap}")
    sigmas = list(all_signatures(anf.s))
    workers = _threads()
    if workers > 1 and len(sigmas) > 64:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda sg: solve_fixed_signature(anf, sg, target), sigmas))
    else:
        results = [solve_fixed_signature(anf, sg, target) for sg in sigmas]

    report = PlSolveReport(iterations=len(sigmas), signatures=sigmas)
    tgt = np.zeros(anf.m) if target is None else np.asarray(target, dtype=float)
    non_discrete = False
    for res in results:
        if res.status not in ("root", "non-discrete"):
            continue
        if any(np.abs(res.x - r.x).max(initial=0) <= 1e-9 * (1 + np.abs(r.x).max(initial=0))
               for r in report.roots):
            continue
        nd = res.status == "non-discrete"
        non_discrete |= nd
        report.roots.append(Root(res.x, np.sign(res.z).astype(int), res.det_sign, nd))
    if report.roots:
        report.residual = max(float(np.linalg.norm(anf_eval(anf, r.x)[0] - tgt)) for r in report.roots)
    if non_discrete:
        report.status = "non-discrete"
    else:
        report.status = {0: "none", 1: "unique"}.get(len(report.roots), "multiple")
    return report


def pl_newton(anf: AbsNormalForm, start=None, budget: int = 50, target=None, sigma=None) -> PlSolveReport:
    """Signature-switching Newton for a square PL system.

    Starts from the signature at ``start`` (zeros resolved to +1) or from
    an explicit ``sigma``.  Each iteration solves the current affine piece
    and adopts the signature of its solution until they agree.
    """
    if anf.m != anf.n:
        raise ValueError("square system required")
    if sigma is None:
        start = np.zeros(anf.n) if start is None else np.asarray(start, dtype=float)
        sigma = resolve_zeros(np.sign(anf_eval(anf, start)[1]))
    sigma = resolve_zeros(sigma)
    report = PlSolveReport()
    tgt = np.zeros(anf.m) if target is None else np.asarray(target, dtype=float)
    seen = set()
    for _ in range(budget):
        key = sigma.tobytes()
        if key in seen:
            report.status = "budget-exceeded"
            return report
        seen.add(key)
        report.signatures.append(sigma)
        report.iterations += 1
        res = solve_fixed_signature(anf, sigma, target)
        if res.status == "singular":
            report.singular = True
            report.status = "none"
            return report
        resid = float(np.linalg.norm(anf_eval(anf, res.x)[0] - tgt))
        report.residual = min(report.residual, resid)
        if res.status in ("root", "non-discrete"):
            nd = res.status == "non-discrete"
            report.roots.append(Root(res.x, np.sign(res.z).astype(int), res.det_sign, nd))
            report.status = "non-discrete" if nd else "unique"
            return report
        new = resolve_zeros(np.sign(res.z), fallback=sigma)
        report.kink_crossings += int(np.sum(new != sigma))
        sigma = new
    report.status = "budget-exceeded"
    return report


@dataclass
class NewtonStep:
    x: np.ndarray
    report: PlSolveReport
    tie: bool = False


def newton_operator(anf: AbsNormalForm, x_ref, s_cap: int = S_CAP, budget: int = 50,
                    strategy: str = "auto", target=None) -> NewtonStep:
    """Root of the PL model with minimal Euclidean distance to ``x_ref``.

    ``strategy="auto"`` runs ``pl_newton`` from the signature at ``x_ref``
    and, when ``s <= s_cap``, enumerates all roots to take the true argmin
    (ties broken lexicographically).  ``strategy="pl-newton"`` stops after
    the signature-switching solve.
    """
    x_ref = np.asarray(x_ref, dtype=float).ravel()
    if anf.s == 0:
        if rcond(anf.J) < RCOND_MIN:
            raise NoRootError("Newton step undefined on this model (singular Jacobian)")
        rhs = -anf.b if target is None else np.asarray(target, dtype=float) - anf.b
        x = np.linalg.solve(anf.J, rhs)
        rep = PlSolveReport(roots=[Root(x, np.zeros(0, dtype=int), int(np.sign(np.linalg.det(anf.J))))],
                            iterations=1, status="unique", residual=0.0)
        return NewtonStep(x, rep)

    rep = pl_newton(anf, x_ref, budget=budget, target=target)
    if strategy == "pl-newton" or anf.s > s_cap:
        if not rep.roots:
            raise NoRootError(f"Newton step undefined on this model ({rep.status})")
        return NewtonStep(rep.roots[0].x, rep)
    if strategy != "auto":
        raise ValueError(f"unknown strategy {strategy!r}")

    full = enumerate_roots(anf, s_cap=s_cap, target=target)
    candidates = [r.x for r in full.roots] + [r.x for r in rep.roots]
    if not candidates:
        raise NoRootError("Newton step undefined on this model (no root)")
    dists = np.array([np.linalg.norm(x - x_ref) for x in candidates])
    best = dists.min()
    close = [x for x, d in zip(candidates, dists) if d <= best + 1e-12 * (1 + best)]
    close.sort(key=lambda v: tuple(v))
    distinct = [close[0]] + [v for v in close[1:] if np.abs(v - close[0]).max() > 1e-9 * (1 + np.abs(v).max())]
    x = close[0]
    match = [r for r in full.roots if np.array_equal(r.x, x)] + [r for r in rep.roots if np.array_equal(r.x, x)]
    rep.roots = match[:1]
    return NewtonStep(x, rep, tie=len(distinct) > 1)
