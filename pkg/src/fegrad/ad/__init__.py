from . import ops
from .api import (
    call_counts,
    dense_hessian,
    dense_jacobian,
    grad_scalar,
    hvp,
    jvp,
    value_and_grad,
)
from .core import Dual, Tape, Var, primal, tape_counter

__all__ = [
    "Dual",
    "Tape",
    "Var",
    "call_counts",
    "dense_hessian",
    "dense_jacobian",
    "grad_scalar",
    "hvp",
    "jvp",
    "ops",
    "primal",
    "tape_counter",
    "value_and_grad",
]
