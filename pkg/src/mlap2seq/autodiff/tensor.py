"""Dense tensors with a reverse-mode gradient tape."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np


class AutodiffError(Exception):
    """Base class for errors raised by the autodiff engine."""


class ShapeError(AutodiffError, ValueError):
    def __init__(self, kind, shapes, detail=""):
        self.kind = kind
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{kind}: incompatible shapes {list(self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericInstabilityError(AutodiffError, FloatingPointError):
    pass


class ContractError(AutodiffError, ValueError):
    pass


_GRAD_ENABLED = True


def is_grad_enabled():
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@dataclass(eq=False)
class Record:
    """One tape entry: the op that produced a tensor and what it saved."""

    op: object
    inputs: tuple
    ctx: dict = field(default_factory=dict)

    @property
    def kind(self):
        return self.op.kind


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_record", "name", "__weakref__")

    # let numpy defer to our reflected operators
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64 if dtype is None else dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._record = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._record is None

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return _ops.add(self, other)

    def __radd__(self, other):
        return _ops.add(other, self)

    def __sub__(self, other):
        return _ops.sub(self, other)

    def __rsub__(self, other):
        return _ops.sub(other, self)

    def __mul__(self, other):
        return _ops.mul(self, other)

    def __rmul__(self, other):
        return _ops.mul(other, self)

    def __neg__(self):
        return _ops.mul(self, -1.0)

    def __matmul__(self, other):
        return _ops.matmul(self, other)

    @property
    def T(self):
        return _ops.transpose(self)

    def sum(self, axis=None, keepdims=False):
        return _ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def relu(self):
        return _ops.relu(self)

    def tanh(self):
        return _ops.tanh(self)

    def sigmoid(self):
        return _ops.sigmoid(self)

    def exp(self):
        return _ops.exp(self)

    def log(self):
        return _ops.log(self)

    def softmax(self, axis=-1):
        return _ops.softmax(self, axis=axis)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


class Tape(list):
    """Records reachable from a root, in topological (creation-compatible) order."""

    @classmethod
    def from_root(cls, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if t._record is None:
                continue
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for inp in t._record.inputs:
                if inp._record is not None and id(inp) not in seen:
                    stack.append((inp, False))
        tape = cls(order)
        return tape


def backward(loss, leaves=None):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``leaves``, if given, are zero-initialised first so that leaves the loss
    does not depend on end up with an explicit zero gradient.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward: loss must be a Tensor")
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if leaves is not None:
        for leaf in leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)

    grads = {id(loss): np.ones_like(loss.data)}
    if loss._record is None:
        if loss.requires_grad:
            _accumulate_leaf(loss, grads[id(loss)])
        return

    tape = Tape.from_root(loss)
    visited = set()
    for out in reversed(tape):
        if id(out) in visited:
            raise AutodiffError("backward: tape visited a record twice")
        visited.add(id(out))
        g = grads.pop(id(out), None)
        if g is None:
            continue
        rec = out._record
        in_grads = rec.op.backward(rec.ctx, g)
        for inp, ig in zip(rec.inputs, in_grads):
            if ig is None or not inp.requires_grad:
                continue
            if inp._record is None:
                _accumulate_leaf(inp, ig)
            else:
                prev = grads.get(id(inp))
                grads[id(inp)] = ig if prev is None else prev + ig


def _accumulate_leaf(leaf, g):
    g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = g.copy()
    else:
        leaf.grad += g


from . import ops as _ops  # noqa: E402  (ops needs Tensor defined first)
