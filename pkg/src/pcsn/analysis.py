"""Solvability and robustness diagnostics for square abs-normal forms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anf import (
    RCOND_MIN, AbsNormalForm, SingularError, all_signatures, rcond,
    selection_function, to_ave,
)
from .plsolve import S_CAP, PlSolveError, enumerate_roots

FEAS_TOL = 1e-9


class AnalysisError(RuntimeError):
    pass


def _check_cap(anf: AbsNormalForm, s_cap: int):
    if anf.s > s_cap:
        raise PlSolveError(f"s={anf.s} exceeds the enumeration cap {s_cap}")


def _check_square(anf: AbsNormalForm):
    if anf.m != anf.n:
        raise ValueError(f"square system required, got m={anf.m}, n={anf.n}")


# --- small dense simplex ------------------------------------------------------

def _simplex_max(c, A, b, max_pivots: int = 10_000) -> tuple[float, np.ndarray]:
    """max c.u  s.t.  A u <= b, u >= 0, with b >= 0 (origin feasible).

    Dense tableau, Bland's smallest-index rule.  Returns (value, u);
    value is +inf when unbounded.
    """
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    eps = 1e-12
    for _ in range(max_pivots):
        cost = T[m, :-1]
        entering = next((j for j in range(n + m) if cost[j] < -eps), None)
        if entering is None:
            break
        col = T[:m, entering]
        ratios = [(T[i, -1] / col[i], basis[i], i) for i in range(m) if col[i] > eps]
        if not ratios:
            return np.inf, np.zeros(n)
        best = min(r for r, _, _ in ratios)
        # Bland: among ties pick the smallest basic variable index
        leave = min((bv, i) for r, bv, i in ratios if r <= best + eps * (1 + abs(best)))[1]
        T[leave] /= T[leave, entering]
        for i in range(m + 1):
            if i != leave and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leave]
        basis[leave] = entering
    else:
        raise AnalysisError("simplex pivot budget exhausted")
    u = np.zeros(n + m)
    for i, bv in enumerate(basis):
        u[bv] = T[i, -1]
    return float(T[m, -1]), u[:n]


def max_min_slack(G, h) -> tuple[float, np.ndarray]:
    """Solve max t s.t. G x + h >= t, t <= 1 (phase-one feasibility LP).

    Returns the optimal slack ``t`` and a maximiser ``x``.  The open set
    ``{x : G x + h > 0}`` is nonempty iff ``t > 0``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    h = np.asarray(h, dtype=float).ravel()
    k, n = G.shape
    if k == 0:
        return 1.0, np.zeros(n)
    # t = t0 + u with t0 feasible at x = 0; x = xp - xm
    t0 = min(0.0, h.min()) - 1.0
    A = np.zeros((k + 1, 2 * n + 1))
    A[:k, :n] = -G
    A[:k, n:2 * n] = G
    A[:k, -1] = 1.0
    A[k, -1] = 1.0
    b = np.concatenate([h - t0, [1.0 - t0]])
    c = np.zeros(2 * n + 1)
    c[-1] = 1.0
    val, u = _simplex_max(c, A, b)
    return t0 + val, u[:n] - u[n:2 * n]


# --- signatures and orientation ----------------------------------------------

def feasible_signatures(anf: AbsNormalForm, s_cap: int = S_CAP) -> list[np.ndarray]:
    """Signatures whose polyhedron has nonempty interior, in binary order."""
    _check_cap(anf, s_cap)
    out = []
    for sigma in all_signatures(anf.s):
        sel = selection_function(anf, sigma)
        t, _ = max_min_slack(sel.G, sel.h)
        if t > FEAS_TOL:
            out.append(sigma)
    return out


@dataclass
class OrientationVerdict:
    status: str  # coherent_positive | coherent_negative | not_coherent | degenerate
    witnesses: list[tuple[np.ndarray, float]] = field(default_factory=list)
    dets: list[tuple[np.ndarray, float]] = field(default_factory=list)

    @property
    def coherent(self) -> bool:
        return self.status.startswith("coherent")

    def to_dict(self) -> dict:
        pack = lambda items: [{"signature": s.tolist(), "det": d} for s, d in items]  # noqa: E731
        return {"status": self.status, "witnesses": pack(self.witnesses), "dets": pack(self.dets)}


def coherent_orientation(anf: AbsNormalForm, s_cap: int = S_CAP) -> OrientationVerdict:
    _check_square(anf)
    dets = []
    for sigma in feasible_signatures(anf, s_cap):
        A = selection_function(anf, sigma).A
        det = float(np.linalg.det(A)) if A.size else 1.0
        if rcond(A) < RCOND_MIN:
            return OrientationVerdict("degenerate", [(sigma, det)], dets + [(sigma, det)])
        dets.append((sigma, det))
    pos = [d for d in dets if d[1] > 0]
    neg = [d for d in dets if d[1] < 0]
    if pos and neg:
        return OrientationVerdict("not_coherent", [pos[0], neg[0]], dets)
    return OrientationVerdict("coherent_negative" if neg else "coherent_positive", [], dets)


def totally_switched(anf: AbsNormalForm) -> bool:
    """True iff Z has full row rank s."""
    if anf.s == 0:
        return True
    if anf.s > anf.n:
        return False
    sv = np.linalg.svd(anf.Z, compute_uv=False)
    if sv[0] == 0.0:
        return False
    return int(np.sum(sv > 1e-10 * sv[0])) == anf.s


@dataclass
class StableBijectivity:
    stable: bool
    witness: np.ndarray | None = None
    det: float | None = None
    dets: list[tuple[np.ndarray, float]] = field(default_factory=list)

    def __bool__(self):
        return self.stable


def ave_determinants(anf: AbsNormalForm, s_cap: int = S_CAP) -> list[tuple[np.ndarray, float]]:
    """det(I - S Sigma) for every signature, binary order."""
    _check_cap(anf, s_cap)
    S = to_ave(anf).S
    eye = np.eye(anf.s)
    return [(sg, float(np.linalg.det(eye - S * sg[None, :]))) for sg in all_signatures(anf.s)]


def stable_bijectivity(anf: AbsNormalForm, s_cap: int = S_CAP) -> StableBijectivity:
    _check_square(anf)
    if anf.s == 0:
        ok = rcond(anf.J) >= RCOND_MIN
        return StableBijectivity(ok, None if ok else np.zeros(0, dtype=int), float(np.linalg.det(anf.J)))
    dets = ave_determinants(anf, s_cap)
    for sigma, det in dets:
        if not det > 0:
            return StableBijectivity(False, sigma, det, dets)
    return StableBijectivity(True, None, None, dets)


# --- degree -------------------------------------------------------------------

def degree(anf: AbsNormalForm, y=None, s_cap: int = S_CAP, seed: int = 0, retries: int = 8) -> int:
    """Brouwer degree of the PL map at a regular value near ``y``."""
    _check_square(anf)
    y = np.zeros(anf.m) if y is None else np.asarray(y, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    target = y
    for _ in range(retries + 1):
        rep = enumerate_roots(anf, s_cap=s_cap, target=target)
        regular = all(not r.non_discrete and np.all(r.signature != 0) and r.det_sign != 0
                      for r in rep.roots)
        if regular:
            return int(sum(r.det_sign for r in rep.roots))
        step = rng.standard_normal(anf.m)
        step *= 1e-7 * (1.0 + np.linalg.norm(y)) / np.linalg.norm(step)
        target = y + step
    raise AnalysisError("could not find a regular value near y")


def homeomorphism_check(anf: AbsNormalForm, s_cap: int = S_CAP, seed: int = 0) -> bool:
    verdict = coherent_orientation(anf, s_cap)
    if not verdict.coherent:
        return False
    return abs(degree(anf, None, s_cap, seed)) == 1


def metric_regularity_constant(anf: AbsNormalForm, s_cap: int = S_CAP) -> float:
    """max over feasible signatures of ||A_sigma^{-1}||_2."""
    _check_square(anf)
    c = 0.0
    for sigma in feasible_signatures(anf, s_cap):
        A = selection_function(anf, sigma).A
        if rcond(A) < RCOND_MIN:
            raise SingularError(f"feasible selection {sigma.tolist()} is singular")
        c = max(c, float(np.linalg.norm(np.linalg.inv(A), 2)))
    return c


@dataclass(frozen=True)
class RadiusEstimate:
    c: float
    gamma: float
    R: float
    mode: str
    R_tilde: float | None = None
    rho: float | None = None


def convergence_radius(c: float, gamma: float, R_tilde: float | None = None,
                       rho: float | None = None, mode: str = "global") -> RadiusEstimate:
    """Radius of guaranteed contraction of the Newton operator.

    contractivity:   min(R_tilde / 3, 2 / (3 c gamma))
    global:          2 / (3 c gamma)
    stable_bijective: min(rho, 1 / (2 c gamma)) / 3
    """
    if not (c > 0 and gamma > 0):
        raise ValueError("c and gamma must be positive")
    if mode == "contractivity":
        if R_tilde is None or not R_tilde > 0:
            raise ValueError("contractivity mode needs R_tilde > 0")
        R = min(R_tilde / 3.0, 2.0 / (3.0 * c * gamma))
    elif mode == "global":
        R = 2.0 / (3.0 * c * gamma)
    elif mode == "stable_bijective":
        if rho is None or not rho > 0:
            raise ValueError("stable_bijective mode needs rho > 0")
        R = min(rho, 1.0 / (2.0 * c * gamma)) / 3.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return RadiusEstimate(c, gamma, R, mode, R_tilde, rho)
