"""Generalized Newton methods for piecewise composite smooth equations."""
from .anf import AbsNormalForm, anf_eval, selection_function, signature_at, to_ave, recover_x
from .linearize import estimate_gamma, secant_linearize, tangent_linearize
from .newton import order_estimate, secant_newton, tangent_newton
from .plsolve import enumerate_roots, newton_operator, pl_newton
from .tape import Recorder, Tape, build_tape, evaluate, record

__version__ = "0.1.0"
