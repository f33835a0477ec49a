"""Straight-line evaluation procedures over smooth elementals and ``abs``.

A :class:`Tape` is the representation of a piecewise composite smooth
function ``F: R^n -> R^m``.  Every ``abs`` node defines one switching
variable; ``max`` and ``min`` are rewritten into ``abs`` form while the
tape is built, so after construction ``abs`` is the only source of kinks.

Tapes can be loaded from JSON (see :func:`build_tape`) or recorded with
operator overloading::

    rec = Recorder(2)
    x1, x2 = rec.inputs
    tape = rec.finish([abs(x1 - x2)])
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

UNARY = ("neg", "sin", "cos", "tan", "exp", "log", "abs")
BINARY = ("add", "sub", "mul", "div", "max", "min")
LEAF = ("input", "const")
OPS = LEAF + UNARY + BINARY


class TapeError(ValueError):
    """Malformed tape description."""


class DomainError(ArithmeticError):
    """An elemental was evaluated outside its domain."""

    def __init__(self, node: int, message: str):
        super().__init__(f"node {node}: {message}")
        self.node = node


@dataclass(frozen=True)
class EvalRecord:
    values: np.ndarray
    y: np.ndarray
    z: np.ndarray
    signature: np.ndarray


class Tape:
    """Immutable straight-line program.

    Nodes are stored in topological order.  ``ops[i]`` is the opcode,
    ``args[i]`` the operand node ids and ``consts[i]`` the constant value
    (const nodes) or the input index (input nodes).
    """

    def __init__(self, n: int, ops, args, consts, outputs, source_ids=None):
        self.n = int(n)
        self.ops = tuple(ops)
        self.args = tuple(tuple(a) for a in args)
        self.consts = tuple(consts)
        self.outputs = tuple(int(o) for o in outputs)
        self.source_ids = dict(source_ids or {})
        self.abs_index = tuple(i for i, op in enumerate(self.ops) if op == "abs")
        self._abs_slot = {node: k for k, node in enumerate(self.abs_index)}
        self._check()

    @property
    def m(self) -> int:
        return len(self.outputs)

    @property
    def s(self) -> int:
        return len(self.abs_index)

    def __len__(self) -> int:
        return len(self.ops)

    def abs_slot(self, node: int) -> int:
        return self._abs_slot[node]

    def _check(self):
        seen_inputs = set()
        for i, (op, a, c) in enumerate(zip(self.ops, self.args, self.consts)):
            if op not in OPS or op in ("max", "min"):
                raise TapeError(f"node {i}: unsupported op {op!r}")
            if any(j < 0 or j >= i for j in a):
                raise TapeError(f"node {i}: operand ids must precede the node")
            if op == "input":
                if not 0 <= c < self.n or c in seen_inputs:
                    raise TapeError(f"node {i}: bad input index {c}")
                seen_inputs.add(c)
        if len(seen_inputs) != self.n:
            raise TapeError(f"expected {self.n} input nodes, found {len(seen_inputs)}")
        if not self.outputs:
            raise TapeError("tape has no outputs")
        for o in self.outputs:
            if not 0 <= o < len(self.ops):
                raise TapeError(f"output refers to unknown node {o}")

    def to_dict(self) -> dict:
        ops = []
        for i, (op, a, c) in enumerate(zip(self.ops, self.args, self.consts)):
            entry = {"id": i, "op": op, "args": list(a)}
            if op == "const":
                entry["value"] = c
            elif op == "input":
                entry["index"] = c
            ops.append(entry)
        return {"n": self.n, "ops": ops, "outputs": list(self.outputs)}

    def __repr__(self):
        return f"Tape(n={self.n}, m={self.m}, s={self.s}, nodes={len(self)})"


_ARITY = {op: 1 for op in UNARY} | {op: 2 for op in BINARY} | {op: 0 for op in LEAF}


class _Builder:
    """Appends nodes and desugars max/min on the way in."""

    def __init__(self):
        self.ops: list[str] = []
        self.args: list[tuple] = []
        self.consts: list = []
        self._const_cache: dict[tuple, int] = {}

    def push(self, op, args=(), value=None) -> int:
        if op == "max" or op == "min":
            u, v = args
            total = self.push("add", (u, v))
            gap = self.push("abs", (self.push("sub", (u, v)),))
            inner = self.push("add" if op == "max" else "sub", (total, gap))
            return self.push("mul", (inner, self.const(0.5)))
        self.ops.append(op)
        self.args.append(tuple(args))
        self.consts.append(value)
        return len(self.ops) - 1

    def const(self, value: float) -> int:
        value = float(value)
        key = (value, math.copysign(1.0, value))
        if key not in self._const_cache:
            self._const_cache[key] = self.push("const", (), value)
        return self._const_cache[key]


def build_tape(program: dict | str) -> Tape:
    """Validate a JSON tape description and build a :class:`Tape`.

    ``program`` is a dict (or JSON text) of the form
    ``{"n": int, "ops": [{"id", "op", "args", "value"?}], "outputs": [ids]}``.
    Input nodes may carry an ``"index"``; otherwise the k-th input node
    in program order is ``x_k``.
    """
    if isinstance(program, str):
        program = json.loads(program)
    try:
        n = int(program["n"])
        entries = program["ops"]
        outputs = program["outputs"]
    except (KeyError, TypeError) as exc:
        raise TapeError(f"missing field: {exc}") from None

    b = _Builder()
    where: dict[int, int] = {}
    source: dict[int, int] = {}
    last_id = -1
    next_input = 0
    for entry in entries:
        try:
            nid = int(entry["id"])
            op = str(entry["op"])
            raw_args = [int(a) for a in entry.get("args", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise TapeError(f"bad op entry {entry!r}: {exc}") from None
        if nid <= last_id:
            raise TapeError(f"ids must be strictly increasing (id {nid} after {last_id})")
        last_id = nid
        if op not in OPS:
            raise TapeError(f"id {nid}: unknown op kind {op!r}")
        if len(raw_args) != _ARITY[op]:
            raise TapeError(f"id {nid}: {op} takes {_ARITY[op]} operands, got {len(raw_args)}")
        for a in raw_args:
            if a not in where:
                kind = "forward reference" if a >= nid else "unknown id"
                raise TapeError(f"id {nid}: {kind} {a}")
        args = tuple(where[a] for a in raw_args)
        if op == "const":
            if "value" not in entry:
                raise TapeError(f"id {nid}: const without value")
            node = b.push("const", (), float(entry["value"]))
        elif op == "input":
            index = int(entry.get("index", next_input))
            next_input += 1
            node = b.push("input", (), index)
        else:
            if "value" in entry:
                raise TapeError(f"id {nid}: value only allowed on const nodes")
            node = b.push(op, args)
        where[nid] = node
        source[node] = nid
    try:
        outs = [where[int(o)] for o in outputs]
    except KeyError as exc:
        raise TapeError(f"output refers to unknown id {exc}") from None
    return Tape(n, b.ops, b.args, b.consts, outs, source_ids=source)


def load_tape(path) -> Tape:
    with open(path) as fh:
        return build_tape(json.load(fh))


def _unary(op: str, a: float, node: int) -> float:
    if op == "abs":
        return abs(a)
    if op == "neg":
        return -a
    if op == "sin":
        return math.sin(a)
    if op == "cos":
        return math.cos(a)
    if op == "tan":
        if math.cos(a) == 0.0:
            raise DomainError(node, f"tan at pole {a!r}")
        return math.tan(a)
    if op == "exp":
        try:
            return math.exp(a)
        except OverflowError:
            raise DomainError(node, f"exp overflow at {a!r}") from None
    if op == "log":
        if not a > 0.0:
            raise DomainError(node, f"log of nonpositive value {a!r}")
        return math.log(a)
    raise TapeError(f"node {node}: unknown unary op {op!r}")


def _values(tape: Tape, x) -> list[float]:
    x = [float(v) for v in np.asarray(x, dtype=float).ravel()]
    if len(x) != tape.n:
        raise ValueError(f"expected {tape.n} inputs, got {len(x)}")
    if not all(math.isfinite(v) for v in x):
        raise ValueError("input is not finite")
    vals = [0.0] * len(tape.ops)
    for i, op in enumerate(tape.ops):
        a = tape.args[i]
        if op == "add":
            vals[i] = vals[a[0]] + vals[a[1]]
        elif op == "sub":
            vals[i] = vals[a[0]] - vals[a[1]]
        elif op == "mul":
            vals[i] = vals[a[0]] * vals[a[1]]
        elif op == "div":
            den = vals[a[1]]
            if den == 0.0:
                raise DomainError(i, "division by zero")
            vals[i] = vals[a[0]] / den
        elif op == "const":
            vals[i] = tape.consts[i]
        elif op == "input":
            vals[i] = x[tape.consts[i]]
        else:
            vals[i] = _unary(op, vals[a[0]], i)
    return vals


def evaluate(tape: Tape, x) -> EvalRecord:
    """Forward evaluation recording outputs, switching values and signature."""
    vals = np.array(_values(tape, x))
    z = np.array([vals[tape.args[i][0]] for i in tape.abs_index])
    return EvalRecord(
        values=vals,
        y=vals[list(tape.outputs)],
        z=z,
        signature=np.sign(z).astype(int),
    )


def evaluate_outputs(tape: Tape, x) -> np.ndarray:
    vals = _values(tape, x)
    return np.array([vals[o] for o in tape.outputs])


# --- recording by operator overloading ---------------------------------------

class Recorder:
    """Record a tape by running ordinary Python arithmetic on :class:`Var`."""

    def __init__(self, n: int):
        self._b = _Builder()
        self.n = n
        self.inputs = [Var(self, self._b.push("input", (), i)) for i in range(n)]

    def const(self, value: float) -> "Var":
        return Var(self, self._b.const(value))

    def _lift(self, v) -> "Var":
        if isinstance(v, Var):
            if v.rec is not self:
                raise TapeError("mixing variables from different recorders")
            return v
        return self.const(v)

    def _push(self, op, *operands) -> "Var":
        ids = tuple(self._lift(o).node for o in operands)
        return Var(self, self._b.push(op, ids))

    def finish(self, outputs: Iterable) -> Tape:
        outs = [self._lift(o).node for o in outputs]
        b = self._b
        return Tape(self.n, b.ops, b.args, b.consts, outs)


class Var:
    __slots__ = ("rec", "node")

    def __init__(self, rec: Recorder, node: int):
        self.rec = rec
        self.node = node

    def __add__(self, o):
        return self.rec._push("add", self, o)

    def __radd__(self, o):
        return self.rec._push("add", o, self)

    def __sub__(self, o):
        return self.rec._push("sub", self, o)

    def __rsub__(self, o):
        return self.rec._push("sub", o, self)

    def __mul__(self, o):
        return self.rec._push("mul", self, o)

    def __rmul__(self, o):
        return self.rec._push("mul", o, self)

    def __truediv__(self, o):
        return self.rec._push("div", self, o)

    def __rtruediv__(self, o):
        return self.rec._push("div", o, self)

    def __neg__(self):
        return self.rec._push("neg", self)

    def __abs__(self):
        return self.rec._push("abs", self)


def _recorder_of(*vs) -> Recorder:
    for v in vs:
        if isinstance(v, Var):
            return v.rec
    raise TypeError("at least one operand must be a tape variable")


def _unary_fn(op):
    def fn(v):
        if isinstance(v, Var):
            return v.rec._push(op, v)
        return _unary(op, float(v), -1)
    fn.__name__ = op
    return fn


sin = _unary_fn("sin")
cos = _unary_fn("cos")
tan = _unary_fn("tan")
exp = _unary_fn("exp")
log = _unary_fn("log")


def maximum(u, v):
    if not isinstance(u, Var) and not isinstance(v, Var):
        return max(u, v)
    return _recorder_of(u, v)._push("max", u, v)


def minimum(u, v):
    if not isinstance(u, Var) and not isinstance(v, Var):
        return min(u, v)
    return _recorder_of(u, v)._push("min", u, v)


def record(n: int, fn) -> Tape:
    """Record ``fn(*inputs) -> sequence of outputs`` into a tape."""
    rec = Recorder(n)
    out = fn(*rec.inputs)
    if isinstance(out, (Var, int, float)):
        out = [out]
    return rec.finish(out)


def tape_program(tape: Tape) -> Sequence[tuple]:
    """(op, args, const) triples, handy for inspection in tests."""
    return list(zip(tape.ops, tape.args, tape.consts))
