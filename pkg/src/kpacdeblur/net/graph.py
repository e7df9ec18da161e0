"""A minimal reverse-mode tape over numpy arrays.

Each op computes its value eagerly and, when any input needs a gradient,
appends a closure to the tape. :meth:`Graph.backward` replays the tape in
reverse. Parameters are interned by name, so every use of a name reads and
accumulates into one node; that is how the KPAC branches share taps.
"""

from __future__ import annotations

import numpy as np

from . import functional as F

__all__ = ["Var", "Graph"]


class Var:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.name or ''}{list(self.value.shape)})"


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Graph:
    """Records operations for one forward pass.

    With ``record=False`` ops only compute values (inference mode).
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.tape = []
        self.params = {}

    # -- leaves -----------------------------------------------------------
    def param(self, name, value) -> Var:
        v = self.params.get(name)
        if v is None:
            v = Var(value, requires_grad=self.record, name=name)
            self.params[name] = v
        return v

    def const(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64))

    # -- plumbing ---------------------------------------------------------
    def _node(self, value, inputs, backward) -> Var:
        needs = self.record and any(i.requires_grad for i in inputs)
        out = Var(value, requires_grad=needs)
        if needs:
            self.tape.append((out, backward))
        return out

    @staticmethod
    def _accumulate(v: Var, g):
        if not v.requires_grad or g is None:
            return
        v.grad = g if v.grad is None else v.grad + g

    def backward(self, out: Var, grad) -> dict:
        """Back-propagate ``grad`` from ``out``; returns ``{param name: gradient}``."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != out.value.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match output {out.value.shape}")
        out.grad = grad
        for node, fn in reversed(self.tape):
            if node.grad is not None:
                fn(node.grad)
        return {name: (v.grad if v.grad is not None else np.zeros_like(v.value))
                for name, v in self.params.items()}

    # -- ops --------------------------------------------------------------
    def conv2d(self, x: Var, w: Var, b: Var | None = None, stride=1, dilation=1, padding="same") -> Var:
        keep = self.record and (x.requires_grad or w.requires_grad or (b is not None and b.requires_grad))
        res = F.conv2d(x.value, w.value, None if b is None else b.value, stride, dilation, padding,
                       keep_cols=keep)
        if not keep:
            return Var(res)
        value, ctx = res

        def backward(g):
            dx, dw, db = F.conv2d_backward(g, w.value, ctx, need_dx=x.requires_grad)
            self._accumulate(x, dx)
            self._accumulate(w, dw)
            if b is not None:
                self._accumulate(b, db)

        return self._node(value, [x, w] + ([b] if b is not None else []), backward)

    def conv_transpose2d(self, x: Var, w: Var, b: Var | None = None, stride=2) -> Var:
        value = F.conv_transpose2d(x.value, w.value, None if b is None else b.value, stride)

        def backward(g):
            dx, dw, db = F.conv_transpose2d_backward(g, x.value, w.value, stride, need_dx=x.requires_grad)
            self._accumulate(x, dx)
            self._accumulate(w, dw)
            if b is not None:
                self._accumulate(b, db)

        return self._node(value, [x, w] + ([b] if b is not None else []), backward)

    def leaky_relu(self, x: Var, slope=F.LEAKY_SLOPE) -> Var:
        value = F.leaky_relu(x.value, slope)

        def backward(g):
            self._accumulate(x, np.where(x.value >= 0, g, slope * g))

        return self._node(value, [x], backward)

    def sigmoid(self, x: Var) -> Var:
        value = F.sigmoid(x.value)

        def backward(g):
            self._accumulate(x, g * value * (1.0 - value))

        return self._node(value, [x], backward)

    def add(self, a: Var, b: Var) -> Var:
        value = a.value + b.value

        def backward(g):
            self._accumulate(a, _unbroadcast(g, a.shape))
            self._accumulate(b, _unbroadcast(g, b.shape))

        return self._node(value, [a, b], backward)

    def mul(self, a: Var, b: Var) -> Var:
        value = a.value * b.value

        def backward(g):
            if a.requires_grad:
                self._accumulate(a, _unbroadcast(g * b.value, a.shape))
            if b.requires_grad:
                self._accumulate(b, _unbroadcast(g * a.value, b.shape))

        return self._node(value, [a, b], backward)

    def concat(self, xs: list, axis: int = -1) -> Var:
        value = np.concatenate([x.value for x in xs], axis=axis)
        bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

        def backward(g):
            for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
                if x.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    self._accumulate(x, g[tuple(idx)])

        return self._node(value, xs, backward)

    def channel(self, x: Var, i: int) -> Var:
        """Channel ``i`` of an NHWC tensor, keeping a singleton channel axis."""
        value = x.value[..., i : i + 1]

        def backward(g):
            full = np.zeros_like(x.value)
            full[..., i : i + 1] = g
            self._accumulate(x, full)

        return self._node(value, [x], backward)

    def global_avg_pool(self, x: Var) -> Var:
        n, h, w, c = x.shape
        value = x.value.mean(axis=(1, 2))

        def backward(g):
            self._accumulate(x, np.broadcast_to(g[:, None, None, :] / (h * w), x.shape).copy())

        return self._node(value, [x], backward)

    def dense(self, x: Var, w: Var, b: Var | None = None) -> Var:
        value = x.value @ w.value
        if b is not None:
            value = value + b.value

        def backward(g):
            if x.requires_grad:
                self._accumulate(x, g @ w.value.T)
            self._accumulate(w, x.value.T @ g)
            if b is not None:
                self._accumulate(b, g.sum(axis=0))

        return self._node(value, [x, w] + ([b] if b is not None else []), backward)

    def reshape(self, x: Var, shape) -> Var:
        value = x.value.reshape(shape)

        def backward(g):
            self._accumulate(x, g.reshape(x.shape))

        return self._node(value, [x], backward)
