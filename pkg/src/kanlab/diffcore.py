"""Reverse-mode tape on numpy arrays, plus order-2 forward jets.

The tape records a concrete evaluation trace: every node holds its value, so
reverse sweeps never re-execute forward code. Second derivatives with respect
to *inputs* (not parameters) come from propagating order-2 jets through the
primal graph while still recording onto the tape, so a scalar built from jet
components (a PDE residual, say) remains differentiable w.r.t. parameters.

Gradient accumulation walks nodes in fixed reverse index order, which makes
gradients bit-reproducible for a fixed graph. Everything is float64.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ParamStore:
    """Flat float64 parameter vector with named segments."""

    def __init__(self):
        self.values = np.zeros(0, dtype=DTYPE)
        self.segments: dict[str, tuple[int, int, tuple]] = {}

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self.segments:
            raise ValueError(f"duplicate parameter segment {name!r}")
        arr = np.asarray(array, dtype=DTYPE)
        off = self.values.size
        self.values = np.concatenate([self.values, arr.ravel()])
        self.segments[name] = (off, arr.size, arr.shape)

    def view(self, name: str) -> np.ndarray:
        off, size, shape = self.segments[name]
        return self.values[off:off + size].reshape(shape)

    def slice_of(self, name: str) -> slice:
        off, size, _ = self.segments[name]
        return slice(off, off + size)

    @property
    def size(self) -> int:
        return self.values.size

    def copy(self) -> "ParamStore":
        other = ParamStore.__new__(ParamStore)
        other.values = self.values.copy()
        other.segments = dict(self.segments)
        return other


class _Node:
    __slots__ = ("op", "args", "val", "aux", "req")

    def __init__(self, op, args, val, aux, req):
        self.op = op
        self.args = args
        self.val = val
        self.aux = aux
        self.req = req


class Var:
    """Handle to one tape node. Arithmetic emits new nodes."""

    __slots__ = ("tp", "i")
    # ndarray <op> Var must hit the reflected ops, not broadcast
    __array_ufunc__ = None

    def __init__(self, tp: "Tape", i: int):
        self.tp = tp
        self.i = i

    @property
    def val(self):
        return self.tp.nodes[self.i].val

    @property
    def shape(self):
        v = self.tp.nodes[self.i].val
        return v.shape if isinstance(v, np.ndarray) else ()

    def _bin(self, op, other):
        tp = self.tp
        if isinstance(other, Jet2):
            return NotImplemented
        o = other if isinstance(other, Var) else tp.const(other)
        return tp._emit(op, (self.i, o.i))

    def __add__(self, other):
        return self._bin("add", other)

    __radd__ = __add__

    def __sub__(self, other):
        return self._bin("sub", other)

    def __rsub__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        o = other if isinstance(other, Var) else self.tp.const(other)
        return o._bin("sub", self)

    def __mul__(self, other):
        return self._bin("mul", other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._bin("div", other)

    def __rtruediv__(self, other):
        if isinstance(other, Jet2):
            return NotImplemented
        o = other if isinstance(other, Var) else self.tp.const(other)
        return o._bin("div", self)

    def __neg__(self):
        return self.tp._emit("neg", (self.i,))

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are on the tape; use sqrt/exp otherwise")
        return self.tp._emit("powi", (self.i,), aux=n)


class Tape:
    def __init__(self):
        self.nodes: list[_Node] = []

    def _push(self, op, args, val, aux=None, req=False) -> Var:
        self.nodes.append(_Node(op, args, val, aux, req))
        return Var(self, len(self.nodes) - 1)

    def const(self, value) -> Var:
        if isinstance(value, np.ndarray):
            value = np.asarray(value, dtype=DTYPE)
        else:
            value = float(value)
        return self._push("const", (), value)

    def param(self, store: ParamStore, name: str) -> Var:
        return self._push("param", (), store.view(name), aux=(store, name), req=True)

    def params(self, store: ParamStore) -> dict[str, Var]:
        return {name: self.param(store, name) for name in store.segments}

    def _emit(self, op, args, aux=None) -> Var:
        nodes = self.nodes
        vals = tuple(nodes[a].val for a in args)
        req = any(nodes[a].req for a in args)
        val = _FORWARD[op](vals, aux)
        return self._push(op, args, val, aux, req)


# ---------------------------------------------------------------------------
# forward rules
# ---------------------------------------------------------------------------

def _fwd_affine(vals, aux):
    x, w = vals[0], vals[1]
    if x.ndim == 3:
        y = x @ w.transpose(0, 2, 1)
        if len(vals) == 3:
            y = y + vals[2][:, None, :]
    else:
        y = x @ w.T
        if len(vals) == 3:
            y = y + vals[2]
    return y


_FORWARD = {
    "add": lambda v, a: v[0] + v[1],
    "sub": lambda v, a: v[0] - v[1],
    "mul": lambda v, a: v[0] * v[1],
    "div": lambda v, a: v[0] / v[1],
    "maximum": lambda v, a: np.maximum(v[0], v[1]),
    "neg": lambda v, a: -v[0],
    "powi": lambda v, a: v[0] ** a,
    "tanh": lambda v, a: np.tanh(v[0]),
    "sin": lambda v, a: np.sin(v[0]),
    "cos": lambda v, a: np.cos(v[0]),
    "exp": lambda v, a: np.exp(v[0]),
    "sqrt": lambda v, a: np.sqrt(v[0]),
    "sum": lambda v, a: (v[0].sum() if a is None else v[0].sum(axis=a)),
    "dot": lambda v, a: np.dot(v[0], v[1]),
    "transpose": lambda v, a: v[0].T if a is None else np.transpose(v[0], a),
    "reshape": lambda v, a: v[0].reshape(a),
    "concat": lambda v, a: np.concatenate(v, axis=a),
    "stack": lambda v, a: np.stack(v, axis=0),
    "take_col": lambda v, a: v[0][:, a],
    "affine": _fwd_affine,
    "linear": _fwd_affine,
}


# ---------------------------------------------------------------------------
# reverse rules
# ---------------------------------------------------------------------------

def _unbroadcast(g, ref):
    """Reduce adjoint g down to the shape of the operand value ref."""
    shape = ref.shape if isinstance(ref, np.ndarray) else ()
    if g.shape == shape:
        return g
    if shape == ():
        return g.sum()
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _acc(adj, idx, contrib, nodes):
    if not nodes[idx].req:
        return
    contrib = _unbroadcast(np.asarray(contrib, dtype=DTYPE), nodes[idx].val)
    if adj[idx] is None:
        adj[idx] = contrib.copy() if isinstance(contrib, np.ndarray) else contrib
    else:
        adj[idx] = adj[idx] + contrib


def _back_affine(node, g, nodes, adj, with_bias):
    xi, wi = node.args[0], node.args[1]
    x, w = nodes[xi].val, nodes[wi].val
    if x.ndim == 3:
        _acc(adj, xi, g @ w, nodes)
        _acc(adj, wi, g.transpose(0, 2, 1) @ x, nodes)
        if with_bias:
            _acc(adj, node.args[2], g.sum(axis=1), nodes)
    else:
        _acc(adj, xi, g @ w, nodes)
        _acc(adj, wi, g.T @ x, nodes)
        if with_bias:
            _acc(adj, node.args[2], g.sum(axis=0), nodes)


def _back_dot(node, g, nodes, adj):
    ai, bi = node.args
    a, b = nodes[ai].val, nodes[bi].val
    if a.ndim == 2 and b.ndim == 2:
        _acc(adj, ai, g @ b.T, nodes)
        _acc(adj, bi, a.T @ g, nodes)
    elif a.ndim == 1 and b.ndim == 1:
        _acc(adj, ai, g * b, nodes)
        _acc(adj, bi, g * a, nodes)
    elif a.ndim == 2 and b.ndim == 1:
        _acc(adj, ai, np.outer(g, b), nodes)
        _acc(adj, bi, a.T @ g, nodes)
    else:
        raise NotImplementedError(f"dot adjoint for shapes {a.shape} @ {b.shape}")


def _backprop(node, g, nodes, adj):
    op = node.op
    if op == "add":
        _acc(adj, node.args[0], g, nodes)
        _acc(adj, node.args[1], g, nodes)
    elif op == "sub":
        _acc(adj, node.args[0], g, nodes)
        _acc(adj, node.args[1], -g, nodes)
    elif op == "mul":
        a, b = node.args
        _acc(adj, a, g * nodes[b].val, nodes)
        _acc(adj, b, g * nodes[a].val, nodes)
    elif op == "div":
        a, b = node.args
        bval = nodes[b].val
        _acc(adj, a, g / bval, nodes)
        _acc(adj, b, -g * node.val / bval, nodes)
    elif op == "maximum":
        a, b = node.args
        mask = node.aux
        _acc(adj, a, g * mask, nodes)
        _acc(adj, b, g * (1.0 - mask), nodes)
    elif op == "neg":
        _acc(adj, node.args[0], -g, nodes)
    elif op == "powi":
        a = node.args[0]
        n = node.aux
        _acc(adj, a, g * n * nodes[a].val ** (n - 1), nodes)
    elif op == "tanh":
        _acc(adj, node.args[0], g * (1.0 - node.val * node.val), nodes)
    elif op == "sin":
        _acc(adj, node.args[0], g * np.cos(nodes[node.args[0]].val), nodes)
    elif op == "cos":
        _acc(adj, node.args[0], -g * np.sin(nodes[node.args[0]].val), nodes)
    elif op == "exp":
        _acc(adj, node.args[0], g * node.val, nodes)
    elif op == "sqrt":
        _acc(adj, node.args[0], g * 0.5 / node.val, nodes)
    elif op == "sum":
        src = nodes[node.args[0]].val
        if node.aux is None:
            _acc(adj, node.args[0], np.full(src.shape, g, dtype=DTYPE), nodes)
        else:
            _acc(adj, node.args[0], np.expand_dims(g, node.aux) * np.ones_like(src), nodes)
    elif op == "dot":
        _back_dot(node, g, nodes, adj)
    elif op == "transpose":
        if node.aux is None:
            _acc(adj, node.args[0], g.T, nodes)
        else:
            _acc(adj, node.args[0], np.transpose(g, np.argsort(node.aux)), nodes)
    elif op == "reshape":
        _acc(adj, node.args[0], g.reshape(nodes[node.args[0]].val.shape), nodes)
    elif op == "concat":
        axis = node.aux
        start = 0
        for idx in node.args:
            w = nodes[idx].val.shape[axis]
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + w)
            _acc(adj, idx, g[tuple(sl)], nodes)
            start += w
    elif op == "stack":
        for p, idx in enumerate(node.args):
            _acc(adj, idx, g[p], nodes)
    elif op == "take_col":
        src = nodes[node.args[0]].val
        full = np.zeros_like(src)
        full[:, node.aux] = g
        _acc(adj, node.args[0], full, nodes)
    elif op == "affine":
        _back_affine(node, g, nodes, adj, with_bias=True)
    elif op == "linear":
        _back_affine(node, g, nodes, adj, with_bias=False)
    elif op in ("const", "param"):
        pass
    else:
        raise NotImplementedError(op)


def grad(tp: Tape, out: Var, store: ParamStore) -> np.ndarray:
    """Gradient of scalar `out` w.r.t. every entry of `store`.

    Segments not touched by the graph get exact zeros.
    """
    nodes = tp.nodes
    o = nodes[out.i]
    if isinstance(o.val, np.ndarray) and o.val.shape != ():
        raise ValueError("grad target must be a scalar")
    g = np.zeros(store.size, dtype=DTYPE)
    if not o.req:
        return g
    adj: list = [None] * (out.i + 1)
    adj[out.i] = np.asarray(1.0, dtype=DTYPE)
    for i in range(out.i, -1, -1):
        a = adj[i]
        if a is None:
            continue
        node = nodes[i]
        if not node.req:
            continue
        if node.op == "param":
            pstore, name = node.aux
            if pstore is store:
                g[store.slice_of(name)] += np.asarray(a, dtype=DTYPE).ravel()
        else:
            _backprop(node, a, nodes, adj)
        adj[i] = None
    return g


# ---------------------------------------------------------------------------
# dispatch layer: same math code runs on ndarrays, Vars, and jets
# ---------------------------------------------------------------------------

def _is_plain(x):
    return not isinstance(x, (Var, Jet2))


def tanh(x):
    if isinstance(x, Var):
        return x.tp._emit("tanh", (x.i,))
    if isinstance(x, Jet2):
        return x._chain("tanh")
    return np.tanh(x)


def sin(x):
    if isinstance(x, Var):
        return x.tp._emit("sin", (x.i,))
    if isinstance(x, Jet2):
        return x._chain("sin")
    return np.sin(x)


def cos(x):
    if isinstance(x, Var):
        return x.tp._emit("cos", (x.i,))
    if isinstance(x, Jet2):
        return x._chain("cos")
    return np.cos(x)


def exp(x):
    if isinstance(x, Var):
        return x.tp._emit("exp", (x.i,))
    if isinstance(x, Jet2):
        return x._chain("exp")
    return np.exp(x)


def sqrt(x):
    if isinstance(x, Var):
        return x.tp._emit("sqrt", (x.i,))
    if isinstance(x, Jet2):
        return x._chain("sqrt")
    return np.sqrt(x)


def powi(x, n: int):
    if isinstance(x, (Var, Jet2)):
        return x ** n
    return x ** n


def maximum(a, b):
    if isinstance(a, Jet2) or isinstance(b, Jet2):
        aj = a if isinstance(a, Jet2) else Jet2._coerce(b.f.tp if isinstance(b, Jet2) else a.tp, a)
        bj = b if isinstance(b, Jet2) else Jet2._coerce(aj.f.tp, b)
        mask = aj.f.tp.const((_value(aj.f) >= _value(bj.f)).astype(DTYPE))
        return aj * mask + bj * (1.0 - mask)
    if isinstance(a, Var) or isinstance(b, Var):
        tp = a.tp if isinstance(a, Var) else b.tp
        av = a if isinstance(a, Var) else tp.const(a)
        bv = b if isinstance(b, Var) else tp.const(b)
        mask = (np.asarray(av.val) >= np.asarray(bv.val)).astype(DTYPE)
        return tp._emit("maximum", (av.i, bv.i), aux=mask)
    return np.maximum(a, b)


def _value(x):
    return x.val if isinstance(x, Var) else x


def vsum(x, axis=None):
    if isinstance(x, Var):
        return x.tp._emit("sum", (x.i,), aux=axis)
    if isinstance(x, Jet2):
        return x._map_linear(lambda v: vsum(v, axis))
    return x.sum(axis=axis)


def vmean(x, axis=None):
    n = _value(x).shape if isinstance(x, (Var, Jet2)) else np.asarray(x).shape
    count = int(np.prod(n)) if axis is None else n[axis]
    return vsum(x, axis) * (1.0 / count)


def dot(a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        tp = a.tp if isinstance(a, Var) else b.tp
        av = a if isinstance(a, Var) else tp.const(a)
        bv = b if isinstance(b, Var) else tp.const(b)
        return tp._emit("dot", (av.i, bv.i))
    return np.dot(a, b)


def transpose(a, axes=None):
    if isinstance(a, Var):
        return a.tp._emit("transpose", (a.i,), aux=None if axes is None else tuple(axes))
    if isinstance(a, Jet2):
        return a._map_linear(lambda v: transpose(v, axes))
    return a.T if axes is None else np.transpose(a, axes)


def reshape(a, shape):
    if isinstance(a, Var):
        return a.tp._emit("reshape", (a.i,), aux=tuple(shape))
    if isinstance(a, Jet2):
        return a._map_linear(lambda v: reshape(v, shape))
    return a.reshape(shape)


def take_col(a, j: int):
    if isinstance(a, Var):
        return a.tp._emit("take_col", (a.i,), aux=j)
    if isinstance(a, Jet2):
        return a._map_linear(lambda v: take_col(v, j))
    return a[:, j]


def concat(parts: Sequence, axis: int):
    if any(isinstance(p, Jet2) for p in parts):
        return _jet_structural(parts, lambda vs: concat(vs, axis))
    if any(isinstance(p, Var) for p in parts):
        tp = next(p.tp for p in parts if isinstance(p, Var))
        idxs = tuple((p if isinstance(p, Var) else tp.const(p)).i for p in parts)
        return tp._emit("concat", idxs, aux=axis)
    return np.concatenate(parts, axis=axis)


def stack(parts: Sequence):
    """Stack equal-shape blocks along a new leading axis."""
    if any(isinstance(p, Jet2) for p in parts):
        return _jet_structural(parts, stack)
    if any(isinstance(p, Var) for p in parts):
        tp = next(p.tp for p in parts if isinstance(p, Var))
        idxs = tuple((p if isinstance(p, Var) else tp.const(p)).i for p in parts)
        return tp._emit("stack", idxs)
    return np.stack(parts, axis=0)


def affine(x, w, b=None):
    """x @ w^T (+ b). Grouped when x is (P,B,F) and w is (P,O,F)."""
    if isinstance(x, Jet2):
        f = affine(x.f, w, b)
        d1 = affine(x.d1, w) if x.d1 is not None else None
        d2 = affine(x.d2, w) if x.d2 is not None else None
        return Jet2(f, d1, d2, x.order)
    operands = (x, w) if b is None else (x, w, b)
    if not any(isinstance(o, Var) for o in operands):
        vals = tuple(np.asarray(o, dtype=DTYPE) for o in operands)
        return _fwd_affine(vals, None)
    tp = next(o.tp for o in operands if isinstance(o, Var))
    xv, wv = (o if isinstance(o, Var) else tp.const(o) for o in (x, w))
    if b is None:
        return tp._emit("linear", (xv.i, wv.i))
    bv = b if isinstance(b, Var) else tp.const(b)
    return tp._emit("affine", (xv.i, wv.i, bv.i))


def _jet_structural(parts, fn):
    """Apply a linear structural op componentwise over a mix of jets/Vars."""
    tp = next(p.f.tp if isinstance(p, Jet2) else p.tp for p in parts
              if isinstance(p, (Jet2, Var)))
    order = max((p.order for p in parts if isinstance(p, Jet2)), default=2)
    fs, d1s, d2s = [], [], []
    any_d1 = any(isinstance(p, Jet2) and p.d1 is not None for p in parts)
    any_d2 = any(isinstance(p, Jet2) and p.d2 is not None for p in parts)
    for p in parts:
        if isinstance(p, Jet2):
            fs.append(p.f)
            d1s.append(p.d1)
            d2s.append(p.d2)
        else:
            fs.append(p)
            d1s.append(None)
            d2s.append(None)
    def fill(comps):
        out = []
        for p, c in zip(fs, comps):
            if c is None:
                out.append(tp.const(np.zeros_like(np.asarray(_value(p)))))
            else:
                out.append(c)
        return out
    f = fn(fs)
    d1 = fn(fill(d1s)) if any_d1 else None
    d2 = fn(fill(d2s)) if any_d2 else None
    return Jet2(f, d1, d2, order)


# ---------------------------------------------------------------------------
# order-2 jets
# ---------------------------------------------------------------------------

def _jadd(x, y):
    if x is None:
        return y
    if y is None:
        return x
    return x + y


def _jneg(x):
    return None if x is None else -x


class Jet2:
    """Truncated order-2 Taylor carrier (value, d1, d2) along one direction.

    Components are tape Vars; None marks a structural zero. order=1 skips all
    second-derivative work (d2 stays None through every rule).
    """

    __slots__ = ("f", "d1", "d2", "order")
    __array_ufunc__ = None

    def __init__(self, f: Var, d1, d2, order: int = 2):
        self.f = f
        self.d1 = d1
        self.d2 = None if order == 1 else d2
        self.order = order

    @staticmethod
    def seed(x: Var, order: int = 2) -> "Jet2":
        """Unit-direction seed: d1 = 1, d2 = 0."""
        ones = x.tp.const(np.ones_like(np.asarray(x.val)))
        return Jet2(x, ones, None, order)

    @staticmethod
    def _coerce(tp, other, order: int = 2) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        v = other if isinstance(other, Var) else tp.const(other)
        return Jet2(v, None, None, order)

    @property
    def val(self):
        return self.f.val

    # -- arithmetic --

    def __add__(self, other):
        o = Jet2._coerce(self.f.tp, other, self.order)
        order = max(self.order, o.order)
        return Jet2(self.f + o.f, _jadd(self.d1, o.d1), _jadd(self.d2, o.d2), order)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.f, _jneg(self.d1), _jneg(self.d2), self.order)

    def __sub__(self, other):
        return self + (-Jet2._coerce(self.f.tp, other, self.order))

    def __rsub__(self, other):
        return (-self) + Jet2._coerce(self.f.tp, other, self.order)

    def __mul__(self, other):
        a, b = self, Jet2._coerce(self.f.tp, other, self.order)
        order = max(a.order, b.order)
        d1 = _jadd(None if a.d1 is None else a.d1 * b.f,
                   None if b.d1 is None else b.d1 * a.f)
        d2 = None
        if order == 2:
            terms = []
            if a.d2 is not None:
                terms.append(a.d2 * b.f)
            if b.d2 is not None:
                terms.append(b.d2 * a.f)
            if a.d1 is not None and b.d1 is not None:
                terms.append((a.d1 * b.d1) * 2.0)
            for t in terms:
                d2 = _jadd(d2, t)
        return Jet2(a.f * b.f, d1, d2, order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self, Jet2._coerce(self.f.tp, other, self.order)
        order = max(a.order, b.order)
        q = a.f / b.f
        num1 = _jadd(a.d1, None if b.d1 is None else -(q * b.d1))
        d1 = None if num1 is None else num1 / b.f
        d2 = None
        if order == 2:
            terms = []
            if a.d2 is not None:
                terms.append(a.d2)
            if d1 is not None and b.d1 is not None:
                terms.append(-((d1 * b.d1) * 2.0))
            if b.d2 is not None:
                terms.append(-(q * b.d2))
            num2 = None
            for t in terms:
                num2 = _jadd(num2, t)
            d2 = None if num2 is None else num2 / b.f
        return Jet2(q, d1, d2, order)

    def __rtruediv__(self, other):
        return Jet2._coerce(self.f.tp, other, self.order) / self

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("integer powers only")
        y = self.f ** n
        dfdx = (self.f ** (n - 1)) * float(n)
        d2fdx = (self.f ** (n - 2)) * float(n * (n - 1)) if self.order == 2 else None
        return self._apply_chain(y, dfdx, d2fdx)

    # -- chain rule plumbing --

    def _apply_chain(self, y: Var, dy: Var, d2y) -> "Jet2":
        d1 = None if self.d1 is None else dy * self.d1
        d2 = None
        if self.order == 2:
            if self.d2 is not None:
                d2 = _jadd(d2, dy * self.d2)
            if self.d1 is not None and d2y is not None:
                d2 = _jadd(d2, d2y * (self.d1 * self.d1))
        return Jet2(y, d1, d2, self.order)

    def _chain(self, op: str) -> "Jet2":
        v, tp = self.f, self.f.tp
        need2 = self.order == 2 and self.d1 is not None
        if op == "tanh":
            y = tanh(v)
            dy = 1.0 - y * y
            d2y = (y * dy) * (-2.0) if need2 else None
        elif op == "sin":
            y = sin(v)
            dy = cos(v)
            d2y = -y if need2 else None
        elif op == "cos":
            y = cos(v)
            dy = -sin(v)
            d2y = -y if need2 else None
        elif op == "exp":
            y = exp(v)
            dy = y
            d2y = y if need2 else None
        elif op == "sqrt":
            y = sqrt(v)
            dy = 0.5 / y
            d2y = -(dy / v) * 0.5 if need2 else None
        else:
            raise NotImplementedError(op)
        return self._apply_chain(y, dy, d2y)

    def _map_linear(self, fn) -> "Jet2":
        return Jet2(fn(self.f),
                    None if self.d1 is None else fn(self.d1),
                    None if self.d2 is None else fn(self.d2),
                    self.order)


# ---------------------------------------------------------------------------
# finite-difference validation helper
# ---------------------------------------------------------------------------

def fd_check(build, store: ParamStore, eps: float = 3e-5,
             coords: Iterable[int] | None = None) -> float:
    """Max relative error between reverse-mode gradient and central differences.

    `build(store)` must construct a fresh tape and return (tape, scalar Var).
    Checks every coordinate unless `coords` narrows the sample. Differences
    smaller than the double-precision rounding floor of the objective are not
    resolvable by central differences and are discounted before the ratio.
    """
    tp, out = build(store)
    g = grad(tp, out, store)
    base = store.values.copy()
    idxs = list(coords) if coords is not None else list(range(store.size))
    noise = 100.0 * max(abs(float(out.val)), 1e-30) * np.finfo(DTYPE).eps / eps
    worst = 0.0
    try:
        for i in idxs:
            store.values[:] = base
            store.values[i] += eps
            f1 = float(build(store)[1].val)
            store.values[i] = base[i] - eps
            f2 = float(build(store)[1].val)
            fd = (f1 - f2) / (2.0 * eps)
            err = max(0.0, abs(g[i] - fd) - noise) / max(abs(g[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    finally:
        store.values[:] = base
    return worst
