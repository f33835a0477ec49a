"""Abs-normal form of a piecewise linear map.

    z = c + Z x + L |z|
    y = b + J x + Y |z|

with ``L`` strictly lower triangular, so ``z`` follows from ``x`` by
forward substitution.  Signatures are ``int`` arrays with entries in
{-1, 0, +1}; solver-facing routines expect strictly ``+-1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

RCOND_MIN = 1e-12


class SingularError(np.linalg.LinAlgError):
    """A matrix that must be inverted is singular to working precision."""


class InconsistentSolution(ValueError):
    """An AVE solution does not round-trip through the ANF."""


def _frozen(a, shape):
    a = np.array(a, dtype=float).reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AbsNormalForm:
    c: np.ndarray
    b: np.ndarray
    Z: np.ndarray
    L: np.ndarray
    J: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        s, m = c.size, b.size
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        Z = np.asarray(self.Z, dtype=float)
        if m:
            n = J.reshape(m, -1).shape[1]
        elif s:
            n = Z.reshape(s, -1).shape[1]
        else:
            n = J.shape[1]
        object.__setattr__(self, "c", _frozen(c, (s,)))
        object.__setattr__(self, "b", _frozen(b, (m,)))
        object.__setattr__(self, "Z", _frozen(self.Z, (s, n)))
        object.__setattr__(self, "L", _frozen(self.L, (s, s)))
        object.__setattr__(self, "J", _frozen(J, (m, n)))
        object.__setattr__(self, "Y", _frozen(self.Y, (m, s)))
        if np.any(np.triu(self.L) != 0.0):
            raise ValueError("L must be strictly lower triangular")

    @property
    def n(self) -> int:
        return self.Z.shape[1]

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def s(self) -> int:
        return self.c.size

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n, self.m, self.s

    @classmethod
    def affine(cls, J, b=None) -> "AbsNormalForm":
        J = np.atleast_2d(np.asarray(J, dtype=float))
        m, n = J.shape
        b = np.zeros(m) if b is None else b
        return cls(np.zeros(0), b, np.zeros((0, n)), np.zeros((0, 0)), J, np.zeros((m, 0)))

    def shifted(self, target) -> "AbsNormalForm":
        """ANF of ``x -> F(x) - target``."""
        return AbsNormalForm(self.c, self.b - np.asarray(target, dtype=float), self.Z, self.L, self.J, self.Y)

    def __call__(self, x) -> np.ndarray:
        return anf_eval(self, x)[0]

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "s": self.s,
            "c": self.c.tolist(), "b": self.b.tolist(),
            "Z": self.Z.tolist(), "L": self.L.tolist(),
            "J": self.J.tolist(), "Y": self.Y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AbsNormalForm":
        n, m, s = int(d["n"]), int(d["m"]), int(d["s"])

        def block(key, rows, cols):
            a = np.array(d[key], dtype=float)
            if a.size != rows * cols:
                raise ValueError(f"block {key} has {a.size} entries, expected {rows}x{cols}")
            return a.reshape(rows, cols)

        return cls(
            block("c", s, 1).ravel(), block("b", m, 1).ravel(),
            block("Z", s, n), block("L", s, s), block("J", m, n), block("Y", m, s),
        )

    def __eq__(self, other):
        if not isinstance(other, AbsNormalForm):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "cbZLJY")

    __hash__ = None


def load_anf(path) -> AbsNormalForm:
    with open(path) as fh:
        return AbsNormalForm.from_dict(json.load(fh))


def anf_eval(anf: AbsNormalForm, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(y, z)`` by forward substitution in index order."""
    x = np.asarray(x, dtype=float).ravel()
    z = anf.c + anf.Z @ x
    absz = np.zeros(anf.s)
    L = anf.L
    for i in range(anf.s):
        if i:
            z[i] += L[i, :i] @ absz[:i]
        absz[i] = abs(z[i])
    y = anf.b + anf.J @ x + anf.Y @ absz
    return y, z


def signature_at(anf: AbsNormalForm, x) -> np.ndarray:
    return np.sign(anf_eval(anf, x)[1]).astype(int)


def resolve_zeros(sigma, fallback=None) -> np.ndarray:
    """Replace zero entries by the fallback signature (default +1)."""
    sigma = np.asarray(sigma, dtype=int).copy()
    zero = sigma == 0
    if fallback is None:
        sigma[zero] = 1
    else:
        sigma[zero] = np.asarray(fallback, dtype=int)[zero]
    return sigma


def all_signatures(s: int):
    """All +-1 signatures in fixed binary order: (+..+), (+..+-), ..., (-..-)."""
    for combo in itertools.product((1, -1), repeat=s):
        yield np.array(combo, dtype=int)


@dataclass(frozen=True)
class Selection:
    """Affine piece ``A x + d`` active on ``{x : G x + h >= 0}``."""

    sigma: np.ndarray
    A: np.ndarray
    d: np.ndarray
    G: np.ndarray
    h: np.ndarray


def _sigma_inverse(anf: AbsNormalForm, sigma) -> np.ndarray:
    # (I - Sigma L)^{-1} Sigma; unit lower triangular, always invertible
    sigma = np.asarray(sigma, dtype=float)
    if anf.s == 0:
        return np.zeros((0, 0))
    M = np.eye(anf.s) - sigma[:, None] * anf.L
    return linalg.solve_triangular(M, np.diag(sigma), lower=True, unit_diagonal=True)


def selection_function(anf: AbsNormalForm, sigma) -> Selection:
    sigma = np.asarray(sigma, dtype=int).ravel()
    if sigma.size != anf.s or np.any(np.abs(sigma) != 1):
        raise ValueError("selection_function needs a +-1 signature of length s")
    W = _sigma_inverse(anf, sigma)
    A = anf.J + anf.Y @ W @ anf.Z
    d = anf.b + anf.Y @ (W @ anf.c)
    # on P_sigma: |z| = W (c + Z x) and sigma * z = |z| >= 0
    G = W @ anf.Z
    h = W @ anf.c
    return Selection(sigma, A, d, G, h)


def limiting_jacobian(anf: AbsNormalForm, sigma) -> np.ndarray:
    return selection_function(anf, sigma).A


def rcond(A) -> float:
    A = np.atleast_2d(A)
    if A.size == 0:
        return 1.0
    sv = np.linalg.svd(A, compute_uv=False)
    return 0.0 if sv[0] == 0 else sv[-1] / sv[0]


def _square_J(anf: AbsNormalForm):
    if anf.m != anf.n:
        raise ValueError(f"square system required, got m={anf.m}, n={anf.n}")
    if rcond(anf.J) < RCOND_MIN:
        raise SingularError("J is singular to working precision")
    return linalg.lu_factor(anf.J)


@dataclass(frozen=True)
class AveSystem:
    """``z - S|z| = c_hat``."""

    S: np.ndarray
    c_hat: np.ndarray

    @property
    def s(self) -> int:
        return self.c_hat.size

    def residual(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z - self.S @ np.abs(z) - self.c_hat


def to_ave(anf: AbsNormalForm, target=None) -> AveSystem:
    lu = _square_J(anf)
    rhs = anf.b if target is None else anf.b - np.asarray(target, dtype=float)
    if anf.s == 0:
        return AveSystem(np.zeros((0, 0)), np.zeros(0))
    S = anf.L - anf.Z @ linalg.lu_solve(lu, anf.Y)
    c_hat = anf.c - anf.Z @ linalg.lu_solve(lu, rhs)
    return AveSystem(S, c_hat)


def ave_solutions(ave: AveSystem, tol: float = 1e-9) -> list[np.ndarray]:
    """All isolated solutions of the AVE by orthant enumeration."""
    sols: list[np.ndarray] = []
    eye = np.eye(ave.s)
    for sigma in all_signatures(ave.s):
        M = eye - ave.S * sigma[None, :]
        if rcond(M) < RCOND_MIN:
            continue
        z = np.linalg.solve(M, ave.c_hat)
        if np.all(sigma * z >= -tol * (1.0 + np.abs(z).max(initial=0.0))):
            if not any(np.max(np.abs(z - w), initial=0.0) <= 1e-9 * (1 + np.abs(w).max(initial=0)) for w in sols):
                sols.append(z)
    return sols


def recover_x(anf: AbsNormalForm, z, target=None, tol: float = 1e-8) -> np.ndarray:
    """Map an AVE solution back to the ANF root ``x``."""
    lu = _square_J(anf)
    z = np.asarray(z, dtype=float).ravel()
    tgt = np.zeros(anf.m) if target is None else np.asarray(target, dtype=float)
    x = linalg.lu_solve(lu, tgt - anf.b - anf.Y @ np.abs(z))
    y, zx = anf_eval(anf, x)
    scale = 1.0 + max(np.abs(tgt).max(initial=0), np.abs(z).max(initial=0))
    if np.abs(y - tgt).max(initial=0) > tol * scale or np.abs(zx - z).max(initial=0) > tol * scale:
        raise InconsistentSolution("z does not round-trip through the ANF")
    return x
