"""numpy-like namespace whose functions accept plain arrays, Dual and Var.

Energy densities and constraint functions written against this namespace
can be evaluated, differentiated in reverse, pushed forward, or both.
"""

from .core import (  # noqa: F401
    abs_ as abs,
    add,
    broadcast_to,
    cofactor,
    concatenate,
    cos,
    cross,
    det,
    divide,
    dot,
    einsum,
    exp,
    getitem,
    index_add,
    index_set,
    inv,
    log,
    matmul,
    maximum,
    minimum,
    multiply,
    negative,
    norm,
    power,
    primal,
    reshape,
    safe_sqrt,
    shape,
    sigmoid,
    sin,
    softplus,
    sqrt,
    square,
    stack,
    subtract,
    sum_ as sum,
    swapaxes,
    take,
    tanh,
    trace,
    transpose,
    where,
    zeros_like,
)
