"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Values are plain float64 ``numpy`` arrays wrapped in :class:`Tensor`.  Every
primitive below computes its result eagerly; when a :class:`Tape` is open and
at least one input is tracked, the primitive also appends a record holding a
vector-Jacobian product closure.  :meth:`Tape.backward` walks the records in
reverse order, so the tape order is a valid topological order by construction.

Outside an open tape the primitives carry no bookkeeping cost, which is what
inference (ODE solving) relies on.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

_TAPES: list["Tape"] = []


class ShapeError(ValueError):
    pass


class Tensor:
    """A float64 array, optionally a trainable leaf."""

    __slots__ = ("data", "requires_grad", "name", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; multiply by a constant")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take_slice(self, index)


class Tape:
    """Records primitives executed while open; use as a context manager."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple, Callable]] = []
        self._open = False

    def __enter__(self) -> "Tape":
        self._open = True
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        self._open = False
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: Tensor, inputs: tuple, vjp: Callable) -> None:
        out._tape = self
        self.records.append((out, inputs, vjp))

    def tracks(self, x) -> bool:
        return isinstance(x, Tensor) and (x.requires_grad or x._tape is self)

    def backward(
        self, loss: Tensor, params: Iterable[Tensor] | None = None, retain: bool = False
    ) -> dict[Tensor, np.ndarray]:
        """Gradients of a scalar ``loss`` with respect to ``params``.

        Defaults to every trainable leaf seen on the tape.  Parameters that do
        not influence the loss receive exact zeros.  The recorded graph is
        released afterwards unless ``retain`` is set.
        """
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
            raise ShapeError(f"backward needs a scalar loss, got shape {shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for out, inputs, vjp in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            tracked = [self.tracks(x) for x in inputs]
            in_grads = vjp(g)
            for x, flag, gx in zip(inputs, tracked, in_grads):
                if not flag or gx is None:
                    continue
                if x.requires_grad:
                    leaves[id(x)] = x
                key = id(x)
                if key in grads:
                    grads[key] = grads[key] + gx
                else:
                    grads[key] = gx
        if params is None:
            params = list(leaves.values())
        out = {p: grads.get(id(p), np.zeros_like(p.data)) for p in params}
        if not retain:
            for rec_out, _, _ in self.records:
                rec_out._tape = None
            self.records.clear()
        return out


def _active() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def _value(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _emit(out: np.ndarray, inputs: tuple, vjp: Callable) -> Tensor:
    result = Tensor(out)
    tape = _active()
    if tape is not None and any(tape.tracks(x) for x in inputs):
        tape.record(result, inputs, vjp)
    return result


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    _broadcast_shape(av, bv, "add")
    return _emit(av + bv, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    _broadcast_shape(av, bv, "sub")
    return _emit(av - bv, (a, b), lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape)))


def mul(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    _broadcast_shape(av, bv, "mul")
    return _emit(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def square(a) -> Tensor:
    av = _value(a)
    return _emit(av * av, (a,), lambda g: (2.0 * av * g,))


def abs_(a) -> Tensor:
    av = _value(a)
    return _emit(np.abs(av), (a,), lambda g: (np.sign(av) * g,))


def tanh(a) -> Tensor:
    out = np.tanh(_value(a))
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    av = _value(a)
    return _emit(np.maximum(av, 0.0), (a,), lambda g: (g * (av > 0),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Tensor:
    """Tanh-approximated GELU."""
    x = _value(a)
    x2 = x * x
    inner = _GELU_C * x * (1.0 + 0.044715 * x2)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner),)

    return _emit(out, (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    x = _value(a)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit(out, (a,), vjp)


# -- linear algebra / reductions ----------------------------------------


def matmul(a, b) -> Tensor:
    av, bv = _value(a), _value(b)
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    if bv.ndim == 2:
        # (..., k) @ (k, n) as one 2-D product
        a2 = av.reshape(-1, av.shape[-1])
        out = (a2 @ bv).reshape(av.shape[:-1] + (bv.shape[1],))

        def vjp2(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bv.T).reshape(av.shape), a2.T @ g2

        return _emit(out, (a, b), vjp2)
    try:
        out = av @ bv
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} and {bv.shape}") from None

    def vjp(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _emit(out, (a, b), vjp)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    av = _value(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _emit(out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    av = _value(a)
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x = _value(a)
    gv, bv = _value(gain), _value(bias)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gv + bv

    def vjp(g):
        gxhat = g * gv
        n = x.shape[-1]
        gx = inv / n * (n * gxhat - gxhat.sum(-1, keepdims=True) - xhat * (gxhat * xhat).sum(-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gv.shape), _unbroadcast(g, bv.shape)

    return _emit(out, (a, gain, bias), vjp)


# -- shape manipulation --------------------------------------------------


def reshape(a, shape: Sequence[int]) -> Tensor:
    av = _value(a)
    try:
        out = av.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {av.shape} as {tuple(shape)}") from None
    return _emit(out, (a,), lambda g: (g.reshape(av.shape),))


def transpose(a, axes: Sequence[int]) -> Tensor:
    av = _value(a)
    inverse = np.argsort(axes)
    return _emit(np.transpose(av, axes), (a,), lambda g: (np.transpose(g, inverse),))


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    values = [_value(p) for p in parts]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[v.shape for v in values]}") from None
    edges = np.cumsum([v.shape[axis] for v in values])[:-1]

    def vjp(g):
        return tuple(np.split(g, edges, axis=axis))

    return _emit(out, tuple(parts), vjp)


def take_slice(a, index) -> Tensor:
    av = _value(a)
    out = av[index]

    def vjp(g):
        full = np.zeros_like(av)
        np.add.at(full, index, g)
        return (full,)

    return _emit(out, (a,), vjp)


def gather(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` (embedding)."""
    tv = _value(table)
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise TypeError(f"gather: ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= tv.shape[0]):
        raise IndexError(f"gather: id out of range for table with {tv.shape[0]} rows")

    def vjp(g):
        full = np.zeros_like(tv)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, *tv.shape[1:]))
        return (full,)

    return _emit(tv[ids], (table,), vjp)


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
