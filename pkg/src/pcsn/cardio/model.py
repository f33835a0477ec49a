"""Fourteen-compartment lumped-parameter model of the circulation.

State ``x = (v, q, p)``: volumes [ml], flows [ml/s] and pressures [mmHg]
for the compartments in :data:`COMPARTMENTS`, which are listed in flow
order around the closed loop.  Valves sit at the outflow of the four
heart chambers and use the cut-off ``theta = (|d| - |d - 1| + 1) / 2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .. import tape as tp

COMPARTMENTS = ("la", "lv", "sa1", "sa2", "sa3", "sv2", "sv1",
                "ra", "rv", "pa1", "pa2", "pa3", "pv2", "pv1")
LARGE = ("sa1", "sv1", "pa1", "pv1")
SMALL = ("sa2", "sa3", "sv2", "pa2", "pa3", "pv2")
ATRIA = ("la", "ra")
VENTRICLES = ("lv", "rv")
CHAMBERS = ATRIA + VENTRICLES
VALVES = {"la": "MV", "lv": "AV", "ra": "TV", "rv": "PV"}
NC = len(COMPARTMENTS)
IDX = {k: i for i, k in enumerate(COMPARTMENTS)}


class ParamsError(ValueError):
    pass


def succ(k: str) -> str:
    return COMPARTMENTS[(IDX[k] + 1) % NC]


def prec(k: str) -> str:
    return COMPARTMENTS[(IDX[k] - 1) % NC]


@dataclass(frozen=True)
class CardioParams:
    R: dict
    L: dict
    V: dict
    C: dict
    E_atria: dict
    E_min: dict
    E_max: dict
    alpha: float
    beta: float
    t_h: float
    kappa0: float
    kappa1: float
    total_volume: float

    @classmethod
    def from_dict(cls, d: dict) -> "CardioParams":
        try:
            comp = d["compartments"]
            vent = d["ventricles"]
            wave = d["waveform"]
        except (KeyError, TypeError) as exc:
            raise ParamsError(f"missing section {exc}") from None
        if set(comp) != set(COMPARTMENTS):
            raise ParamsError(f"compartments must be exactly {sorted(COMPARTMENTS)}")
        if set(vent) != set(VENTRICLES):
            raise ParamsError("ventricles must be exactly lv and rv")

        def need(section, k, key):
            try:
                val = float(section[k][key])
            except (KeyError, TypeError, ValueError):
                raise ParamsError(f"{k}: missing {key}") from None
            if not (val > 0 and math.isfinite(val)):
                raise ParamsError(f"{k}.{key} must be positive, got {val}")
            return val

        R = {k: need(comp, k, "R") for k in COMPARTMENTS}
        V = {k: need(comp, k, "V") for k in COMPARTMENTS}
        L = {k: need(comp, k, "L") for k in LARGE + CHAMBERS}
        C = {k: need(comp, k, "C") for k in LARGE + SMALL}
        E_atria = {k: need(comp, k, "E") for k in ATRIA}
        E_min = {k: need(vent, k, "E_min") for k in VENTRICLES}
        E_max = {k: need(vent, k, "E_max") for k in VENTRICLES}
        w = {key: need({"waveform": wave}, "waveform", key)
             for key in ("alpha", "beta", "t_h", "kappa0", "kappa1")}
        total = need({"initial": d.get("initial", {})}, "initial", "total_volume")
        return cls(R, L, V, C, E_atria, E_min, E_max, total_volume=total, **w)

    @classmethod
    def load(cls, path=None) -> "CardioParams":
        if path is None:
            text = resources.files(__package__).joinpath("default_params.json").read_text()
            return cls.from_dict(json.loads(text))
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParamsError(f"cannot read {path}: {exc}") from None
        return cls.from_dict(data)


def default_params() -> CardioParams:
    return CardioParams.load()


def reduced_time(t: float, p: CardioParams) -> float:
    return math.pi * math.fmod(t, p.t_h) / (p.kappa0 + p.kappa1 * p.t_h) if t >= 0 else \
        math.pi * (t % p.t_h) / (p.kappa0 + p.kappa1 * p.t_h)


def activation(tbar, p: CardioParams):
    """phi = max(0, alpha sin(tbar) - beta sin(2 tbar)); tape-aware."""
    g = p.alpha * tp.sin(tbar) - p.beta * tp.sin(2.0 * tbar)
    return tp.maximum(0.0, g)


def elastance(t: float, p: CardioParams) -> tuple[float, float]:
    """Ventricular elastances (E_lv, E_rv) at time t."""
    phi = activation(reduced_time(t, p), p)
    return tuple(p.E_min[k] * (1.0 - phi) + p.E_max[k] * phi for k in VENTRICLES)


def cutoff(d):
    """max(0, min(1, d)) written with abs; works on floats and tape variables."""
    return 0.5 * (abs(d) - abs(d - 1.0) + 1.0)


def _valve_argument(k, v, q, p, params):
    d = p[IDX[k]] - p[IDX[succ(k)]]
    if k in VENTRICLES:
        d = d - params.R[k] * q[IDX[k]]
    return d


def _theta(k, v, q, p, params):
    d = _valve_argument(k, v, q, p, params)
    if k in VENTRICLES:
        # written as theta - 1/2 = (|d| - |d - 1|) / 2
        return 0.5 + 0.5 * (abs(d) - abs(d - 1.0))
    return cutoff(d)


def equations(params: CardioParams, x, xdot, tbar):
    """Residuals of the DAE ``0 = f(xdot, x, t)`` in the order (v-eqs, q-eqs, p-eqs).

    ``x`` and ``xdot`` may hold floats or tape variables; ``tbar`` is the
    reduced time (float or tape variable).
    """
    v, q, p = x[:NC], x[NC:2 * NC], x[2 * NC:]
    vdot, qdot = xdot[:NC], xdot[NC:2 * NC]
    phi = activation(tbar, params)
    res_v, res_q, res_p = [], [], []
    for k in COMPARTMENTS:
        i, j, r = IDX[k], IDX[succ(k)], IDX[prec(k)]
        R = params.R[k]
        res_v.append(vdot[i] - (q[r] - q[i]))
        if k in LARGE:
            res_q.append(params.L[k] * qdot[i] - (p[i] - p[j] - R * q[i]))
            res_p.append(params.C[k] * p[i] - (v[i] - params.V[k]))
        elif k in SMALL:
            res_q.append(R * q[i] - (p[i] - p[j]))
            res_p.append(params.C[k] * p[i] - (v[i] - params.V[k]))
        else:
            theta = _theta(k, v, q, p, params)
            drive = p[i] - p[j] - R * q[i] - params.L[k] * qdot[i]
            res_q.append((1.0 - theta) * q[i] - theta * drive)
            if k in ATRIA:
                E = params.E_atria[k]
            else:
                E = params.E_min[k] * (1.0 - phi) + params.E_max[k] * phi
            res_p.append(p[i] - E * (v[i] - params.V[k]))
    return res_v + res_q + res_p


# mass matrix diagonal: volumes, flows of large vessels and chambers
MASS = np.array([1.0] * NC + [0.0 if k in SMALL else 1.0 for k in COMPARTMENTS] + [0.0] * NC)


class CardioModel:
    """Parameterised DAE with per-step implicit Euler residual tapes."""

    n = 3 * NC

    def __init__(self, params: CardioParams):
        self.params = params

    def f(self, xdot, x, t: float) -> np.ndarray:
        """Numeric DAE residual."""
        tbar = reduced_time(t, self.params)
        xd = [float(v) for v in np.asarray(xdot, dtype=float)]
        xx = [float(v) for v in np.asarray(x, dtype=float)]
        return np.array(equations(self.params, xx, xd, tbar), dtype=float)

    def step_tape(self, x_prev, t: float, h: float) -> tp.Tape:
        """Tape of ``x -> f(D (x - x_prev) / h, x, t)``."""
        if not h > 0:
            raise ValueError("step size must be positive")
        x_prev = np.asarray(x_prev, dtype=float)
        rec = tp.Recorder(self.n)
        x = rec.inputs
        xdot = [(x[i] - float(x_prev[i])) / h if MASS[i] else 0.0 for i in range(self.n)]
        tbar = rec.const(reduced_time(t, self.params))
        return rec.finish(equations(self.params, x, xdot, tbar))

    def _split(self, x):
        x = [float(v) for v in np.asarray(x, dtype=float)]
        return x[:NC], x[NC:2 * NC], x[2 * NC:]

    def thetas(self, x) -> dict:
        """Valve openings as evaluated on the tape (abs form, so within rounding of [0, 1])."""
        v, q, p = self._split(x)
        return {VALVES[k]: _theta(k, v, q, p, self.params) for k in CHAMBERS}

    def transitioning(self, x) -> list[str]:
        """Valves whose cut-off argument lies strictly inside (0, 1)."""
        v, q, p = self._split(x)
        return [VALVES[k] for k in CHAMBERS if 0.0 < _valve_argument(k, v, q, p, self.params) < 1.0]

    def initial_state(self, t0: float = 0.0) -> np.ndarray:
        """Uniform pressure, zero flow, volume distributed by compliance.

        With equal pressures every valve argument is zero (valves closed)
        and every algebraic equation holds exactly.
        """
        P = self.params
        E_lv, E_rv = elastance(t0, P)
        compliance = {k: P.C[k] for k in LARGE + SMALL}
        compliance.update({k: 1.0 / P.E_atria[k] for k in ATRIA})
        compliance.update({"lv": 1.0 / E_lv, "rv": 1.0 / E_rv})
        excess = P.total_volume - sum(P.V.values())
        if excess <= 0:
            raise ParamsError("total volume does not exceed the unstressed volume")
        p0 = excess / sum(compliance.values())
        v = np.array([P.V[k] + compliance[k] * p0 for k in COMPARTMENTS])
        return np.concatenate([v, np.zeros(NC), np.full(NC, p0)])


def build_model(params: CardioParams | None = None) -> CardioModel:
    return CardioModel(params or default_params())


def implicit_euler_residual(model: CardioModel, x_prev, t: float, h: float) -> tp.Tape:
    return model.step_tape(x_prev, t, h)
