"""Array-valued dual numbers and a reverse-mode tape.

Both carriers hold whole numpy arrays, so one recorded operation covers a
batch of quadrature points. A ``Var`` may carry a ``Dual`` as its value;
sweeping such a tape backwards yields a dual gradient whose tangent part is
a Hessian-vector product (forward over reverse).

Every primitive below dispatches on its arguments: ``Var`` records on the
tape, ``Dual`` propagates tangents, anything else goes straight to numpy.
Backward rules are written with the same dispatching primitives so that they
work on dual-valued cotangents.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class _Traced:
    """Marker base; binary ops defer to the more derived carrier."""

    __array_ufunc__ = None
    __array_priority__ = 100


# ---------------------------------------------------------------------------
# tape bookkeeping


class TapeCounter:
    """Counts live recorded scalar entries over all open tapes."""

    def __init__(self):
        self.live = 0
        self.peak = 0

    def reset(self):
        self.live = 0
        self.peak = 0

    def add(self, n):
        self.live += n
        if self.live > self.peak:
            self.peak = self.live

    def sub(self, n):
        self.live -= n


tape_counter = TapeCounter()


class Tape:
    """A linear record of primitive applications for one reverse sweep.

    ``length`` is the number of scalar entries produced by recorded
    operations (leaves excluded).
    """

    def __init__(self):
        self.nodes = []
        self.length = 0
        self._closed = False

    def leaf(self, value) -> Var:
        v = Var(_as_value(value), self, len(self.nodes))
        self.nodes.append(())
        return v

    def record(self, out, edges) -> Var:
        if self._closed:
            raise RuntimeError("tape already released")
        v = Var(out, self, len(self.nodes))
        self.nodes.append(tuple(edges))
        n = int(np.size(out.value if isinstance(out, Dual) else out))
        self.length += n
        tape_counter.add(n)
        return v

    def gradient(self, y: Var, wrt):
        """Reverse sweep from scalar ``y``; returns cotangents for ``wrt``."""
        if y.tape is not self:
            raise ValueError("output was not recorded on this tape")
        grads = [None] * len(self.nodes)
        grads[y.index] = np.ones(shape(y.value))
        for i in range(y.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for parent, fn in self.nodes[i]:
                c = fn(g)
                grads[parent] = c if grads[parent] is None else grads[parent] + c
            if self.nodes[i]:
                grads[i] = None
        out = []
        for w in wrt:
            g = grads[w.index]
            out.append(zeros_like(w.value) if g is None else g)
        return out

    def release(self):
        if not self._closed:
            tape_counter.sub(self.length)
            self.nodes = []
            self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.release()


def _as_value(x):
    if isinstance(x, Dual):
        return x
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Dual


class Dual(_Traced):
    """Value plus one tangent direction, both arrays of the same shape."""

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent=None):
        value = np.asarray(value, dtype=float)
        if tangent is None:
            tangent = np.zeros_like(value)
        else:
            tangent = np.asarray(tangent, dtype=float)
            if tangent.shape != value.shape:
                tangent = np.broadcast_to(tangent, value.shape)
        self.value = value
        self.tangent = tangent

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    size = property(lambda self: self.value.size)
    T = property(lambda self: transpose(self))

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.tangent!r})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __lt__(self, o):
        return self.value < primal(o)

    def __le__(self, o):
        return self.value <= primal(o)

    def __gt__(self, o):
        return self.value > primal(o)

    def __ge__(self, o):
        return self.value >= primal(o)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def reshape(self, *shape_):
        return reshape(self, shape_[0] if len(shape_) == 1 else shape_)

    def transpose(self, *axes):
        return transpose(self, axes or None)


# ---------------------------------------------------------------------------
# Var


class Var(_Traced):
    """Tape variable. ``value`` is an ndarray or a Dual."""

    __slots__ = ("value", "tape", "index")

    def __init__(self, value, tape, index):
        self.value = value
        self.tape = tape
        self.index = index

    shape = property(lambda self: shape(self.value))
    ndim = property(lambda self: len(shape(self.value)))
    size = property(lambda self: int(np.prod(shape(self.value))))
    T = property(lambda self: transpose(self))

    def __len__(self):
        return shape(self.value)[0]

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"

    __add__ = Dual.__add__
    __radd__ = Dual.__radd__
    __sub__ = Dual.__sub__
    __rsub__ = Dual.__rsub__
    __mul__ = Dual.__mul__
    __rmul__ = Dual.__rmul__
    __truediv__ = Dual.__truediv__
    __rtruediv__ = Dual.__rtruediv__
    __neg__ = Dual.__neg__
    __pow__ = Dual.__pow__
    __matmul__ = Dual.__matmul__
    __rmatmul__ = Dual.__rmatmul__
    __getitem__ = Dual.__getitem__
    sum = Dual.sum
    reshape = Dual.reshape
    transpose = Dual.transpose

    def __lt__(self, o):
        return primal(self) < primal(o)

    def __le__(self, o):
        return primal(self) <= primal(o)

    def __gt__(self, o):
        return primal(self) > primal(o)

    def __ge__(self, o):
        return primal(self) >= primal(o)


# ---------------------------------------------------------------------------
# helpers


def shape(x):
    if isinstance(x, (Dual, Var)):
        return x.shape
    return np.shape(x)


def primal(x):
    """Strip all derivative carriers and return the plain ndarray value."""
    while isinstance(x, (Var, Dual)):
        x = x.value
    return x


def val(x):
    """One level down: the value of a Var (may be a Dual), else ``x``."""
    return x.value if isinstance(x, Var) else x


def zeros_like(x):
    if isinstance(x, Var):
        x = x.value
    if isinstance(x, Dual):
        z = np.zeros(x.shape)
        return Dual(z, z.copy())
    return np.zeros(np.shape(x))


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise ValueError("mixing variables from different tapes")
    return tape


def _any_dual(*xs):
    return any(isinstance(x, Dual) for x in xs)


def _split(x):
    if isinstance(x, Dual):
        return x.value, x.tangent
    return x, None


def unbroadcast(g, shp):
    """Sum ``g`` down to shape ``shp`` (reverse of numpy broadcasting)."""
    shp = tuple(shp)
    gs = shape(g)
    if gs == shp:
        return g
    extra = len(gs) - len(shp)
    if extra > 0:
        g = sum_(g, tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shp) if s == 1 and shape(g)[i] != 1)
    if axes:
        g = sum_(g, axes, keepdims=True)
    return g


def _record(out, pairs):
    tape = _tape_of(*(p for p, _ in pairs))
    return tape.record(out, [(p.index, fn) for p, fn in pairs])


# ---------------------------------------------------------------------------
# arithmetic


def add(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        xv, yv = val(x), val(y)
        out = add(xv, yv)
        pairs = []
        if isinstance(x, Var):
            sx = shape(xv)
            pairs.append((x, lambda g: unbroadcast(g, sx)))
        if isinstance(y, Var):
            sy = shape(yv)
            pairs.append((y, lambda g: unbroadcast(g, sy)))
        return _record(out, pairs)
    if _any_dual(x, y):
        a, da = _split(x)
        b, db = _split(y)
        v = a + b
        if da is None:
            t = db
        elif db is None:
            t = da
        else:
            t = da + db
        return Dual(v, t)
    return np.add(x, y)


def negative(x):
    if isinstance(x, Var):
        return _record(negative(x.value), [(x, negative)])
    if isinstance(x, Dual):
        return Dual(-x.value, -x.tangent)
    return np.negative(x)


def subtract(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        xv, yv = val(x), val(y)
        out = subtract(xv, yv)
        pairs = []
        if isinstance(x, Var):
            sx = shape(xv)
            pairs.append((x, lambda g: unbroadcast(g, sx)))
        if isinstance(y, Var):
            sy = shape(yv)
            pairs.append((y, lambda g: unbroadcast(negative(g), sy)))
        return _record(out, pairs)
    if _any_dual(x, y):
        a, da = _split(x)
        b, db = _split(y)
        v = a - b
        if da is None:
            t = -db
        elif db is None:
            t = da
        else:
            t = da - db
        return Dual(v, t)
    return np.subtract(x, y)


def multiply(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        xv, yv = val(x), val(y)
        out = multiply(xv, yv)
        pairs = []
        if isinstance(x, Var):
            sx = shape(xv)
            pairs.append((x, lambda g: unbroadcast(multiply(g, yv), sx)))
        if isinstance(y, Var):
            sy = shape(yv)
            pairs.append((y, lambda g: unbroadcast(multiply(g, xv), sy)))
        return _record(out, pairs)
    if _any_dual(x, y):
        a, da = _split(x)
        b, db = _split(y)
        v = a * b
        if da is None:
            t = a * db
        elif db is None:
            t = da * b
        else:
            t = da * b + a * db
        return Dual(v, t)
    return np.multiply(x, y)


def divide(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        xv, yv = val(x), val(y)
        out = divide(xv, yv)
        pairs = []
        if isinstance(x, Var):
            sx = shape(xv)
            pairs.append((x, lambda g: unbroadcast(divide(g, yv), sx)))
        if isinstance(y, Var):
            sy = shape(yv)
            pairs.append(
                (y, lambda g: unbroadcast(negative(divide(multiply(g, out), yv)), sy))
            )
        return _record(out, pairs)
    if _any_dual(x, y):
        a, da = _split(x)
        b, db = _split(y)
        v = a / b
        if db is None:
            t = da / b
        elif da is None:
            t = -v * db / b
        else:
            t = (da - v * db) / b
        return Dual(v, t)
    return np.divide(x, y)


def power(x, p):
    """``x ** p`` for a constant real exponent ``p``."""
    if isinstance(p, (Var, Dual)):
        raise TypeError("only constant exponents are supported")
    if p == 2:
        return multiply(x, x)
    if isinstance(x, Var):
        xv = x.value
        return _record(
            power(xv, p), [(x, lambda g: multiply(g, multiply(p, power(xv, p - 1))))]
        )
    if isinstance(x, Dual):
        return Dual(x.value**p, p * x.value ** (p - 1) * x.tangent)
    return np.power(x, p)


def square(x):
    return multiply(x, x)


# ---------------------------------------------------------------------------
# elementary functions


def exp(x):
    if isinstance(x, Var):
        out = exp(x.value)
        return _record(out, [(x, lambda g: multiply(g, out))])
    if isinstance(x, Dual):
        v = np.exp(x.value)
        return Dual(v, v * x.tangent)
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        xv = x.value
        return _record(log(xv), [(x, lambda g: divide(g, xv))])
    if isinstance(x, Dual):
        return Dual(np.log(x.value), x.tangent / x.value)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Var):
        out = sqrt(x.value)
        return _record(out, [(x, lambda g: divide(g, multiply(2.0, out)))])
    if isinstance(x, Dual):
        v = np.sqrt(x.value)
        return Dual(v, x.tangent / (2.0 * v))
    return np.sqrt(x)


def safe_sqrt(x, eps=1e-30):
    """Square root with the argument clamped at ``eps`` from below."""
    return sqrt(maximum(x, eps))


def sin(x):
    if isinstance(x, Var):
        xv = x.value
        return _record(sin(xv), [(x, lambda g: multiply(g, cos(xv)))])
    if isinstance(x, Dual):
        return Dual(np.sin(x.value), np.cos(x.value) * x.tangent)
    return np.sin(x)


def cos(x):
    if isinstance(x, Var):
        xv = x.value
        return _record(cos(xv), [(x, lambda g: negative(multiply(g, sin(xv))))])
    if isinstance(x, Dual):
        return Dual(np.cos(x.value), -np.sin(x.value) * x.tangent)
    return np.cos(x)


def tanh(x):
    if isinstance(x, Var):
        out = tanh(x.value)
        return _record(
            out, [(x, lambda g: multiply(g, subtract(1.0, multiply(out, out))))]
        )
    if isinstance(x, Dual):
        v = np.tanh(x.value)
        return Dual(v, (1.0 - v * v) * x.tangent)
    return np.tanh(x)


def sigmoid(x):
    if isinstance(x, Var):
        out = sigmoid(x.value)
        return _record(
            out, [(x, lambda g: multiply(g, multiply(out, subtract(1.0, out))))]
        )
    if isinstance(x, Dual):
        s = _np_sigmoid(x.value)
        return Dual(s, s * (1.0 - s) * x.tangent)
    return _np_sigmoid(x)


def _np_sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    """log(1 + exp(x)), evaluated stably."""
    if isinstance(x, Var):
        xv = x.value
        return _record(softplus(xv), [(x, lambda g: multiply(g, sigmoid(xv)))])
    if isinstance(x, Dual):
        return Dual(_np_softplus(x.value), _np_sigmoid(x.value) * x.tangent)
    return _np_softplus(x)


def _np_softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def where(cond, x, y):
    """Select with a plain boolean mask; derivatives follow the taken branch."""
    cond = np.asarray(primal(cond), dtype=bool)
    if isinstance(x, Var) or isinstance(y, Var):
        xv, yv = val(x), val(y)
        out = where(cond, xv, yv)
        pairs = []
        if isinstance(x, Var):
            sx = shape(xv)
            pairs.append((x, lambda g: unbroadcast(where(cond, g, 0.0), sx)))
        if isinstance(y, Var):
            sy = shape(yv)
            pairs.append((y, lambda g: unbroadcast(where(cond, 0.0, g), sy)))
        return _record(out, pairs)
    if _any_dual(x, y):
        a, da = _split(x)
        b, db = _split(y)
        v = np.where(cond, a, b)
        t = np.where(cond, 0.0 if da is None else da, 0.0 if db is None else db)
        return Dual(v, t)
    return np.where(cond, x, y)


def maximum(x, y):
    """Elementwise max; ties take the first argument's derivative."""
    return where(primal(x) >= primal(y), x, y)


def minimum(x, y):
    """Elementwise min; ties take the first argument's derivative."""
    return where(primal(x) <= primal(y), x, y)


def abs_(x):
    """|x| with derivative +1 at zero."""
    return where(primal(x) >= 0, x, negative(x))


# ---------------------------------------------------------------------------
# shape manipulation and reductions


def sum_(x, axis=None, keepdims=False):
    if isinstance(x, Var):
        xv = x.value
        sx = shape(xv)

        def back(g):
            if axis is not None and not keepdims:
                ax = (axis,) if np.isscalar(axis) else tuple(axis)
                ax = tuple(a % len(sx) for a in ax)
                g = reshape(g, tuple(1 if i in ax else s for i, s in enumerate(sx)))
            return broadcast_to(g, sx)

        return _record(sum_(xv, axis, keepdims), [(x, back)])
    if isinstance(x, Dual):
        return Dual(
            np.sum(x.value, axis=axis, keepdims=keepdims),
            np.sum(x.tangent, axis=axis, keepdims=keepdims),
        )
    return np.sum(x, axis=axis, keepdims=keepdims)


def broadcast_to(x, shp):
    if isinstance(x, Var):
        sx = shape(x.value)
        return _record(broadcast_to(x.value, shp), [(x, lambda g: unbroadcast(g, sx))])
    if isinstance(x, Dual):
        return Dual(np.broadcast_to(x.value, shp), np.broadcast_to(x.tangent, shp))
    return np.broadcast_to(x, shp)


def reshape(x, shp):
    if isinstance(x, Var):
        sx = shape(x.value)
        return _record(reshape(x.value, shp), [(x, lambda g: reshape(g, sx))])
    if isinstance(x, Dual):
        return Dual(np.reshape(x.value, shp), np.reshape(x.tangent, shp))
    return np.reshape(x, shp)


def transpose(x, axes=None):
    if isinstance(x, Var):
        inv = None if axes is None else tuple(np.argsort(axes))
        return _record(transpose(x.value, axes), [(x, lambda g: transpose(g, inv))])
    if isinstance(x, Dual):
        return Dual(np.transpose(x.value, axes), np.transpose(x.tangent, axes))
    return np.transpose(x, axes)


def swapaxes(x, a, b):
    if isinstance(x, Var):
        return _record(swapaxes(x.value, a, b), [(x, lambda g: swapaxes(g, a, b))])
    if isinstance(x, Dual):
        return Dual(np.swapaxes(x.value, a, b), np.swapaxes(x.tangent, a, b))
    return np.swapaxes(x, a, b)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(
        i is None or i is Ellipsis or isinstance(i, (slice, int, np.integer))
        for i in items
    )


def getitem(x, idx):
    if isinstance(x, Var):
        xv = x.value
        sx = shape(xv)
        return _record(
            getitem(xv, idx), [(x, lambda g: index_add(np.zeros(sx), idx, g))]
        )
    if isinstance(x, Dual):
        return Dual(x.value[idx], x.tangent[idx])
    return np.asarray(x)[idx]


def take(x, indices, axis=0):
    """Gather along ``axis``; the reverse rule scatter-adds."""
    if axis != 0:
        raise NotImplementedError("take supports axis=0 only")
    return getitem(x, np.asarray(indices))


def _np_index_add(base, idx, g):
    out = np.array(base, dtype=float, copy=True)
    if _is_basic_index(idx):
        out[idx] += g
    else:
        np.add.at(out, idx, g)
    return out


def index_add(base, idx, g):
    """Return a copy of ``base`` with ``g`` added at ``idx`` (duplicates sum)."""
    if isinstance(base, Var) or isinstance(g, Var):
        bv, gv = val(base), val(g)
        out = index_add(bv, idx, gv)
        pairs = []
        if isinstance(base, Var):
            pairs.append((base, lambda c: c))
        if isinstance(g, Var):
            sg = shape(gv)
            pairs.append((g, lambda c: unbroadcast(getitem(c, idx), sg)))
        return _record(out, pairs)
    if _any_dual(base, g):
        b, db = _split(base)
        v, dv = _split(g)
        value = _np_index_add(b, idx, v)
        tangent = np.zeros(value.shape) if db is None else np.array(db, copy=True)
        if dv is not None:
            tangent = _np_index_add(tangent, idx, dv)
        return Dual(value, tangent)
    return _np_index_add(base, idx, g)


def index_set(base, idx, g):
    """Return a copy of ``base`` with entries at ``idx`` replaced by ``g``."""
    if isinstance(base, Var) or isinstance(g, Var):
        bv, gv = val(base), val(g)
        out = index_set(bv, idx, gv)
        pairs = []
        if isinstance(base, Var):
            pairs.append((base, lambda c: index_set(c, idx, 0.0)))
        if isinstance(g, Var):
            sg = shape(gv)
            pairs.append((g, lambda c: unbroadcast(getitem(c, idx), sg)))
        return _record(out, pairs)
    if _any_dual(base, g):
        b, db = _split(base)
        v, dv = _split(g)
        value = np.array(b, dtype=float, copy=True)
        value[idx] = v
        tangent = np.zeros(value.shape) if db is None else np.array(db, copy=True)
        tangent[idx] = 0.0 if dv is None else dv
        return Dual(value, tangent)
    out = np.array(base, dtype=float, copy=True)
    out[idx] = g
    return out


def concatenate(xs, axis=0):
    xs = list(xs)
    if any(isinstance(x, Var) for x in xs):
        vals = [val(x) for x in xs]
        out = concatenate(vals, axis)
        sizes = [shape(v)[axis] for v in vals]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        pairs = []
        for k, x in enumerate(xs):
            if isinstance(x, Var):
                sl = [slice(None)] * len(shape(out))
                sl[axis] = slice(int(offs[k]), int(offs[k + 1]))
                sl = tuple(sl)
                pairs.append((x, lambda g, sl=sl: getitem(g, sl)))
        return _record(out, pairs)
    if _any_dual(*xs):
        vs, ts = [], []
        for x in xs:
            a, da = _split(x)
            a = np.asarray(a, dtype=float)
            vs.append(a)
            ts.append(np.zeros(a.shape) if da is None else da)
        return Dual(np.concatenate(vs, axis), np.concatenate(ts, axis))
    return np.concatenate([np.asarray(x, dtype=float) for x in xs], axis)


def stack(xs, axis=0):
    xs = list(xs)
    expanded = []
    for x in xs:
        s = list(shape(x))
        ax = axis % (len(s) + 1)
        s.insert(ax, 1)
        expanded.append(reshape(x, tuple(s)))
    return concatenate(expanded, axis)


# ---------------------------------------------------------------------------
# linear algebra


def _einsum_parse(spec, nops):
    ins, out = spec.replace(" ", "").split("->")
    ins = ins.split(",")
    if len(ins) != nops:
        raise ShapeMismatch(f"einsum spec {spec!r} expects {len(ins)} operands")
    return ins, out


def einsum(spec, *ops):
    """einsum over one or two operands.

    Every index of an operand must appear in the output or the other operand.
    """
    if len(ops) == 1:
        (a,) = ops
        (sa,), so = _einsum_parse(spec, 1)
        if isinstance(a, Var):
            av = a.value
            ones = np.ones(shape(av))
            back = f"{so},{sa}->{sa}"
            return _record(einsum(spec, av), [(a, lambda g: einsum(back, g, ones))])
        if isinstance(a, Dual):
            return Dual(np.einsum(spec, a.value), np.einsum(spec, a.tangent))
        return np.einsum(spec, a)
    if len(ops) != 2:
        raise NotImplementedError("einsum supports one or two operands")
    a, b = ops
    (sa, sb), so = _einsum_parse(spec, 2)
    if isinstance(a, Var) or isinstance(b, Var):
        av, bv = val(a), val(b)
        out = einsum(spec, av, bv)
        pairs = []
        if isinstance(a, Var):
            back_a = f"{so},{sb}->{sa}"
            shp_a = shape(av)
            pairs.append((a, lambda g: unbroadcast(einsum(back_a, g, bv), shp_a)))
        if isinstance(b, Var):
            back_b = f"{so},{sa}->{sb}"
            shp_b = shape(bv)
            pairs.append((b, lambda g: unbroadcast(einsum(back_b, g, av), shp_b)))
        return _record(out, pairs)
    if _any_dual(a, b):
        x, dx = _split(a)
        y, dy = _split(b)
        v = np.einsum(spec, x, y)
        t = 0.0
        if dx is not None:
            t = np.einsum(spec, dx, y)
        if dy is not None:
            t = t + np.einsum(spec, x, dy)
        return Dual(v, t)
    return np.einsum(spec, a, b)


def matmul(a, b):
    """Batched matrix product; both operands need ndim >= 2."""
    if len(shape(a)) < 2 or len(shape(b)) < 2:
        raise ShapeMismatch("matmul expects operands with ndim >= 2")
    if isinstance(a, Var) or isinstance(b, Var):
        av, bv = val(a), val(b)
        out = matmul(av, bv)
        pairs = []
        if isinstance(a, Var):
            sa = shape(av)
            pairs.append((a, lambda g: unbroadcast(matmul(g, swapaxes(bv, -1, -2)), sa)))
        if isinstance(b, Var):
            sb = shape(bv)
            pairs.append((b, lambda g: unbroadcast(matmul(swapaxes(av, -1, -2), g), sb)))
        return _record(out, pairs)
    if _any_dual(a, b):
        x, dx = _split(a)
        y, dy = _split(b)
        v = x @ y
        t = 0.0
        if dx is not None:
            t = dx @ y
        if dy is not None:
            t = t + x @ dy
        return Dual(v, t)
    return np.matmul(a, b)


def dot(a, b):
    """Inner product over the last axis."""
    return sum_(multiply(a, b), axis=-1)


def trace(a):
    d = shape(a)[-1]
    return sum_(multiply(a, np.eye(d)), axis=(-2, -1))


def cofactor(a):
    """Cofactor matrix det(A)·A⁻ᵀ of stacked 1x1, 2x2 or 3x3 matrices."""
    d = shape(a)[-1]
    if d == 1:
        return zeros_like(a) + 1.0
    if d == 2:
        r0 = stack([a[..., 1, 1], negative(a[..., 1, 0])], -1)
        r1 = stack([negative(a[..., 0, 1]), a[..., 0, 0]], -1)
        return stack([r0, r1], -2)
    if d == 3:
        c0, c1, c2 = a[..., :, 0], a[..., :, 1], a[..., :, 2]
        # rows of the cofactor matrix are cross products of the columns
        return stack([cross(c1, c2), cross(c2, c0), cross(c0, c1)], -1)
    raise ShapeMismatch(f"cofactor not available for {d}x{d}")


def cross(x, y):
    """Cross product of stacked 3-vectors (last axis)."""
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    y0, y1, y2 = y[..., 0], y[..., 1], y[..., 2]
    return stack(
        [x1 * y2 - x2 * y1, x2 * y0 - x0 * y2, x0 * y1 - x1 * y0], -1
    )


def det(a):
    """Determinant of stacked small square matrices (d <= 3)."""
    if isinstance(a, Var):
        av = a.value
        out = det(av)
        return _record(
            out,
            [(a, lambda g: multiply(reshape(g, shape(g) + (1, 1)), cofactor(av)))],
        )
    if isinstance(a, Dual):
        v = det(a.value)
        cof = cofactor(a.value)
        return Dual(v, np.einsum("...ij,...ij->...", cof, a.tangent))
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    if d == 1:
        return a[..., 0, 0].copy()
    if d == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if d == 3:
        return np.einsum("...i,...i->...", a[..., 0, :], cofactor(a)[..., 0, :])
    return np.linalg.det(a)


def inv(a):
    """Inverse of stacked small square matrices (d <= 3)."""
    if isinstance(a, Var):
        out = inv(a.value)

        def back(g):
            ot = swapaxes(out, -1, -2)
            return negative(matmul(matmul(ot, g), ot))

        return _record(out, [(a, back)])
    if isinstance(a, Dual):
        v = inv(a.value)
        return Dual(v, -v @ a.tangent @ v)
    a = np.asarray(a, dtype=float)
    d = det(a)
    return np.swapaxes(cofactor(a), -1, -2) / d[..., None, None]


def norm(x, axis=-1):
    """Euclidean norm along ``axis`` (not differentiable at 0)."""
    return sqrt(sum_(multiply(x, x), axis=axis))
