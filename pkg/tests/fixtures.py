"""Shared tapes and abs-normal forms used across the test suite."""
import numpy as np

from pcsn import AbsNormalForm, build_tape, record
from pcsn import tape as tp

# F(x) = (x1 + |x1 - x2| + |x1 - |x2||, x2)
NESTED_PROGRAM = {
    "n": 2,
    "ops": [
        {"id": 0, "op": "input"},
        {"id": 1, "op": "input"},
        {"id": 2, "op": "sub", "args": [0, 1]},
        {"id": 3, "op": "abs", "args": [2]},
        {"id": 4, "op": "abs", "args": [1]},
        {"id": 5, "op": "sub", "args": [0, 4]},
        {"id": 6, "op": "abs", "args": [5]},
        {"id": 7, "op": "add", "args": [0, 3]},
        {"id": 8, "op": "add", "args": [7, 6]},
    ],
    "outputs": [8, 1],
}

NESTED_ANF = AbsNormalForm(
    c=np.zeros(3), b=np.zeros(2),
    Z=np.array([[1.0, -1.0], [0.0, 1.0], [1.0, 0.0]]),
    L=np.array([[0.0, 0, 0], [0, 0, 0], [0, -1.0, 0]]),
    J=np.eye(2),
    Y=np.array([[1.0, 0, 1.0], [0, 0, 0]]),
)

NESTED_FEASIBLE = [(1, 1, 1), (1, -1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, -1)]


def nested_closed_form(x):
    x1, x2 = x
    return np.array([x1 + abs(x1 - x2) + abs(x1 - abs(x2)), x2])


def nested_tape():
    return build_tape(NESTED_PROGRAM)


def counterexample_tape():
    """f(x, y) = (x + max(y^2 - max(x, 0), 0), y)."""
    return record(2, lambda *x: [x[0] + tp.maximum(x[1] * x[1] - tp.maximum(x[0], 0.0), 0.0), x[1]])


def unstable_anf(c=0.0):
    """Identity of x for c >= 0, written with two switching variables (s > n)."""
    return AbsNormalForm(
        c=np.array([-c, 0.0]), b=np.zeros(1),
        Z=np.array([[1.0], [1.0]]), L=np.array([[0.0, 0.0], [1.0, 0.0]]),
        J=np.array([[0.5]]), Y=np.array([[-0.5, 0.5]]),
    )


def quadratic_tape():
    """x^2 - 1, roots at +-1."""
    return record(1, lambda *x: [x[0] * x[0] - 1.0])


def nonsmooth_tape():
    """Root at the origin, where the tangent model is stably bijective."""
    return record(2, lambda *x: [2.0 * x[0] + abs(x[1]) + x[0] * x[0],
                                2.0 * x[1] + abs(x[0]) + tp.sin(x[1]) * x[0]])


def order_tape():
    """Nonsmooth, stably bijective at the origin, with unit quadratic constant.

    A unit constant keeps the log-ratio order estimate near its asymptotic
    value within the few iterates a double-precision run provides.
    """
    return record(2, lambda *x: [x[0] + 0.5 * abs(x[1]) + x[0] * x[0],
                                x[1] + 0.5 * abs(x[0]) + x[1] * x[1]])


def abs_minus_one_tape():
    return record(1, lambda *x: [abs(x[0]) - 1.0])


# smooth-plus-abs tapes for approximation-order checks; (tape, reference point)
def order_fixtures():
    return [
        (record(2, lambda *x: [tp.sin(x[0]) * abs(x[1] - 0.3) + tp.exp(x[0] * x[1]),
                              abs(tp.cos(x[0]) - x[1]) * x[0]]), np.array([0.4, 0.3])),
        (record(1, lambda *x: [abs(x[0] * x[0] - 0.25) + tp.log(2.0 + x[0])]), np.array([0.5])),
        (record(2, lambda *x: [tp.maximum(x[0] * x[1], tp.sin(x[0] + x[1])) / (2.0 + x[0] * x[0]),
                              tp.minimum(tp.exp(x[0]), 1.0 + x[1])]), np.array([0.0, 0.0])),
        (record(3, lambda *x: [abs(abs(x[0]) - x[1] * x[2]) + tp.tan(0.5 * x[2]),
                              x[0] * abs(x[1]) - tp.cos(x[2])]), np.array([0.0, 0.2, -0.1])),
        (record(2, lambda *x: [abs(x[0]) * abs(x[1]) + tp.exp(-x[0]) * x[1],
                              -abs(x[0] - x[1]) + x[0] * x[0] * x[1]]), np.array([0.1, 0.1])),
    ]


def random_square_anf(rng, n, s, cond_max=1e3):
    """Random ANF with m = n and cond(J) <= cond_max."""
    while True:
        J = rng.standard_normal((n, n))
        if np.linalg.cond(J) <= cond_max:
            break
    L = np.tril(rng.standard_normal((s, s)), -1)
    return AbsNormalForm(
        c=rng.standard_normal(s), b=rng.standard_normal(n),
        Z=rng.standard_normal((s, n)), L=L, J=J, Y=rng.standard_normal((n, s)),
    )


def stable_square_anf(rng, n, s, bound=0.3):
    """Random ANF with L = 0 and row sums of |S| at most ``bound`` < 1.

    Such instances are stably bijective, hence coherently oriented.
    """
    anf = random_square_anf(rng, n, s)
    scale = bound / max(1.0, np.abs(anf.Z @ np.linalg.solve(anf.J, anf.Y)).sum(1).max())
    return AbsNormalForm(anf.c, anf.b, anf.Z, 0.0 * anf.L, anf.J, anf.Y * scale)
