"""Differentiable primitives.

Every primitive is an :class:`Op` subclass registered under its ``kind``;
:func:`primitive_forward` is the single entry point that validates shapes,
runs the forward kernel, checks for non-finite output and records the tape
entry. The functional helpers below (``add``, ``matmul``, ...) are thin
wrappers around it.
"""

import numpy as np

from .. import kernels
from .tensor import (
    ContractError,
    NumericInstabilityError,
    Record,
    ShapeError,
    Tensor,
    as_tensor,
    is_grad_enabled,
)

OPS = {}


def register(cls):
    OPS[cls.kind] = cls()
    return cls


class Op:
    kind = None

    def check(self, shapes, attrs):
        pass

    def forward(self, ctx, *xs, **attrs):
        raise NotImplementedError

    def backward(self, ctx, g):
        raise NotImplementedError


def primitive_forward(kind, inputs, attrs=None):
    """Run primitive ``kind`` on ``inputs`` and record it on the tape if needed."""
    attrs = attrs or {}
    try:
        op = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown primitive kind {kind!r}") from None
    like = next((t for t in inputs if isinstance(t, Tensor)), None)
    inputs = tuple(as_tensor(t, like) for t in inputs)
    op.check([t.shape for t in inputs], attrs)
    ctx = {}
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):  # reported below instead
        out = op.forward(ctx, *(t.data for t in inputs), **attrs)
    if not np.all(np.isfinite(out)):
        raise NumericInstabilityError(f"{kind}: non-finite output for input shapes {[t.shape for t in inputs]}")
    result = Tensor(out)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        result._record = Record(op, inputs, ctx)
    return result


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(kind, shapes):
    try:
        np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(kind, shapes) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


@register
class Add(Op):
    kind = "add"

    def check(self, shapes, attrs):
        _check_broadcast(self.kind, shapes)

    def forward(self, ctx, a, b):
        ctx["shapes"] = (a.shape, b.shape)
        return a + b

    def backward(self, ctx, g):
        sa, sb = ctx["shapes"]
        return _unbroadcast(g, sa), _unbroadcast(g, sb)


@register
class Sub(Op):
    kind = "sub"

    def check(self, shapes, attrs):
        _check_broadcast(self.kind, shapes)

    def forward(self, ctx, a, b):
        ctx["shapes"] = (a.shape, b.shape)
        return a - b

    def backward(self, ctx, g):
        sa, sb = ctx["shapes"]
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)


@register
class Mul(Op):
    kind = "mul"

    def check(self, shapes, attrs):
        _check_broadcast(self.kind, shapes)

    def forward(self, ctx, a, b):
        ctx["a"], ctx["b"] = a, b
        return a * b

    def backward(self, ctx, g):
        a, b = ctx["a"], ctx["b"]
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


@register
class Div(Op):
    kind = "div"

    def check(self, shapes, attrs):
        _check_broadcast(self.kind, shapes)

    def forward(self, ctx, a, b):
        ctx["a"], ctx["b"] = a, b
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b

    def backward(self, ctx, g):
        a, b = ctx["a"], ctx["b"]
        return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


@register
class MatMul(Op):
    kind = "matmul"

    def check(self, shapes, attrs):
        (sa, sb) = shapes
        if len(sa) != 2 or len(sb) != 2 or sa[1] != sb[0]:
            raise ShapeError(self.kind, shapes, "expected (n, k) @ (k, m)")

    def forward(self, ctx, a, b):
        ctx["a"], ctx["b"] = a, b
        return a @ b

    def backward(self, ctx, g):
        a, b = ctx["a"], ctx["b"]
        return g @ b.T, a.T @ g


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


@register
class Transpose(Op):
    kind = "transpose"

    def check(self, shapes, attrs):
        if len(shapes[0]) != 2:
            raise ShapeError(self.kind, shapes, "expected a matrix")

    def forward(self, ctx, a):
        return a.T

    def backward(self, ctx, g):
        return (g.T,)


@register
class Reshape(Op):
    kind = "reshape"

    def check(self, shapes, attrs):
        try:
            np.empty(shapes[0]).reshape(attrs["shape"])
        except ValueError:
            raise ShapeError(self.kind, [shapes[0], attrs["shape"]]) from None

    def forward(self, ctx, a, shape):
        ctx["shape"] = a.shape
        return a.reshape(shape)

    def backward(self, ctx, g):
        return (g.reshape(ctx["shape"]),)


@register
class Concat(Op):
    kind = "concat"

    def check(self, shapes, attrs):
        axis = attrs.get("axis", -1)
        ref = list(shapes[0])
        for s in shapes[1:]:
            if len(s) != len(ref):
                raise ShapeError(self.kind, shapes)
            for ax in range(len(ref)):
                if ax != axis % len(ref) and s[ax] != ref[ax]:
                    raise ShapeError(self.kind, shapes)

    def forward(self, ctx, *xs, axis=-1):
        ctx["axis"] = axis
        ctx["sizes"] = [x.shape[axis] for x in xs]
        return np.concatenate(xs, axis=axis)

    def backward(self, ctx, g):
        cuts = np.cumsum(ctx["sizes"])[:-1]
        return tuple(np.split(g, cuts, axis=ctx["axis"]))


@register
class Stack(Op):
    kind = "stack"

    def check(self, shapes, attrs):
        if any(s != shapes[0] for s in shapes):
            raise ShapeError(self.kind, shapes)

    def forward(self, ctx, *xs, axis=0):
        ctx["axis"] = axis
        return np.stack(xs, axis=axis)

    def backward(self, ctx, g):
        axis = ctx["axis"]
        return tuple(np.moveaxis(g, axis, 0))


@register
class Slice(Op):
    """Contiguous slice ``[start:stop]`` along ``axis``."""

    kind = "slice"

    def check(self, shapes, attrs):
        axis = attrs.get("axis", -1)
        n = shapes[0][axis]
        if not 0 <= attrs["start"] < attrs["stop"] <= n:
            raise ShapeError(self.kind, shapes, f"slice [{attrs['start']}:{attrs['stop']}] on axis of size {n}")

    def forward(self, ctx, a, start, stop, axis=-1):
        ctx.update(shape=a.shape, start=start, stop=stop, axis=axis)
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(start, stop)
        return a[tuple(idx)]

    def backward(self, ctx, g):
        out = np.zeros(ctx["shape"], dtype=g.dtype)
        idx = [slice(None)] * out.ndim
        idx[ctx["axis"]] = slice(ctx["start"], ctx["stop"])
        out[tuple(idx)] = g
        return (out,)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


@register
class Sum(Op):
    kind = "sum"

    def forward(self, ctx, a, axis=None, keepdims=False):
        ctx.update(shape=a.shape, axis=axis, keepdims=keepdims)
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, ctx, g):
        shape, axis = ctx["shape"], ctx["axis"]
        if axis is not None and not ctx["keepdims"]:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)


@register
class Mean(Op):
    kind = "mean"

    def forward(self, ctx, a, axis=None, keepdims=False):
        ctx.update(shape=a.shape, axis=axis, keepdims=keepdims)
        n = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
        ctx["n"] = n
        return np.asarray(a.mean(axis=axis, keepdims=keepdims))

    def backward(self, ctx, g):
        shape, axis = ctx["shape"], ctx["axis"]
        if axis is not None and not ctx["keepdims"]:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / ctx["n"], shape).copy(),)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


@register
class Relu(Op):
    kind = "relu"

    def forward(self, ctx, a):
        mask = a > 0
        ctx["mask"] = mask
        return a * mask

    def backward(self, ctx, g):
        return (g * ctx["mask"],)


@register
class Tanh(Op):
    kind = "tanh"

    def forward(self, ctx, a):
        y = np.tanh(a)
        ctx["y"] = y
        return y

    def backward(self, ctx, g):
        y = ctx["y"]
        return (g * (1.0 - y * y),)


@register
class Sigmoid(Op):
    kind = "sigmoid"

    def forward(self, ctx, a):
        # split by sign so exp never overflows
        y = np.empty_like(a)
        pos = a >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        e = np.exp(a[~pos])
        y[~pos] = e / (1.0 + e)
        ctx["y"] = y
        return y

    def backward(self, ctx, g):
        y = ctx["y"]
        return (g * y * (1.0 - y),)


@register
class Exp(Op):
    kind = "exp"

    def forward(self, ctx, a):
        y = np.exp(a)
        ctx["y"] = y
        return y

    def backward(self, ctx, g):
        return (g * ctx["y"],)


@register
class Log(Op):
    """Natural log; with ``eps`` the input is clamped from below first."""

    kind = "log"

    def forward(self, ctx, a, eps=None):
        if eps is not None:
            clamped = a < eps
            ctx["clamped"] = clamped
            a = np.where(clamped, eps, a)
        ctx["a"] = a
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(a)

    def backward(self, ctx, g):
        ga = g / ctx["a"]
        if "clamped" in ctx:
            ga = np.where(ctx["clamped"], 0.0, ga)
        return (ga,)


@register
class Sqrt(Op):
    kind = "sqrt"

    def forward(self, ctx, a):
        with np.errstate(invalid="ignore"):
            y = np.sqrt(a)
        ctx["y"] = y
        return y

    def backward(self, ctx, g):
        return (g / (2.0 * ctx["y"]),)


@register
class Softmax(Op):
    kind = "softmax"

    def forward(self, ctx, a, axis=-1):
        z = a - a.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)
        ctx["y"], ctx["axis"] = y, axis
        return y

    def backward(self, ctx, g):
        y, axis = ctx["y"], ctx["axis"]
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)


@register
class LayerNorm(Op):
    """Normalise over the last axis, then scale by ``gamma`` and shift by ``beta``."""

    kind = "layer_norm"

    def check(self, shapes, attrs):
        x, gamma, beta = shapes
        if gamma != (x[-1],) or beta != (x[-1],):
            raise ShapeError(self.kind, shapes, "gamma/beta must match the last axis")

    def forward(self, ctx, x, gamma, beta, eps=1e-5):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        ctx.update(xhat=xhat, inv=inv, gamma=gamma)
        return xhat * gamma + beta

    def backward(self, ctx, g):
        xhat, inv, gamma = ctx["xhat"], ctx["inv"], ctx["gamma"]
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gx = g * gamma
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta


@register
class Dropout(Op):
    """Inverted dropout: kept entries are scaled by 1/(1-p) at train time."""

    kind = "dropout"

    def check(self, shapes, attrs):
        p = attrs.get("p", 0.0)
        if not 0.0 <= p < 1.0:
            raise ContractError(f"dropout: p must be in [0, 1), got {p}")

    def forward(self, ctx, a, p=0.0, training=False, rng=None):
        if not training or p == 0.0:
            ctx["scale"] = None
            return a.copy()
        if rng is None:
            raise ContractError("dropout: training mode needs an rng")
        keep = 1.0 - p
        scale = (rng.random(a.shape) < keep).astype(a.dtype) / keep
        ctx["scale"] = scale
        return a * scale

    def backward(self, ctx, g):
        scale = ctx["scale"]
        return (g if scale is None else g * scale,)


@register
class ScaleGrad(Op):
    """Identity forward; multiplies the incoming gradient by ``factor``."""

    kind = "scale_grad"

    def forward(self, ctx, a, factor=1.0):
        ctx["factor"] = factor
        return a.copy()

    def backward(self, ctx, g):
        return (g * ctx["factor"],)


# ---------------------------------------------------------------------------
# indexing and segment ops
# ---------------------------------------------------------------------------


def _check_ids(kind, ids, upper, what):
    ids = np.asarray(ids)
    if ids.ndim != 1 or ids.dtype.kind not in "iu":
        raise ContractError(f"{kind}: {what} must be a 1-d integer array")
    if ids.size and (ids.min() < 0 or ids.max() >= upper):
        raise ContractError(f"{kind}: {what} out of range [0, {upper})")


@register
class Embedding(Op):
    """Row gather ``table[ids]``; its gradient scatters back with segment-sum."""

    kind = "embedding"

    def check(self, shapes, attrs):
        (table,) = shapes
        if len(table) < 1:
            raise ShapeError(self.kind, shapes)
        _check_ids(self.kind, attrs["ids"], table[0], "ids")

    def forward(self, ctx, table, ids):
        ctx["ids"], ctx["rows"] = ids, table.shape[0]
        return table[ids]

    def backward(self, ctx, g):
        return (kernels.segment_sum(g, ctx["ids"], ctx["rows"]),)


@register
class SegmentSum(Op):
    kind = "segment_sum"

    def check(self, shapes, attrs):
        ids = np.asarray(attrs["segment_ids"])
        if ids.shape != (shapes[0][0],):
            raise ShapeError(self.kind, [shapes[0], ids.shape], "segment ids must align with the first axis")
        _check_ids(self.kind, ids, attrs["num_segments"], "segment ids")

    def forward(self, ctx, values, segment_ids, num_segments):
        ctx["ids"] = segment_ids
        return kernels.segment_sum(values, segment_ids, num_segments)

    def backward(self, ctx, g):
        return (g[ctx["ids"]],)


@register
class SegmentSoftmax(Op):
    """Softmax of ``scores`` taken independently within each segment."""

    kind = "segment_softmax"

    def check(self, shapes, attrs):
        SegmentSum.check(self, shapes, attrs)

    def forward(self, ctx, scores, segment_ids, num_segments):
        mx = kernels.segment_max(scores, segment_ids, num_segments)
        e = np.exp(scores - mx[segment_ids])
        denom = kernels.segment_sum(e, segment_ids, num_segments)
        y = e / denom[segment_ids]
        ctx.update(y=y, ids=segment_ids, n=num_segments)
        return y

    def backward(self, ctx, g):
        y, ids = ctx["y"], ctx["ids"]
        dot = kernels.segment_sum(g * y, ids, ctx["n"])
        return (y * (g - dot[ids]),)


# ---------------------------------------------------------------------------
# functional API
# ---------------------------------------------------------------------------


def add(a, b):
    return primitive_forward("add", (a, b))


def sub(a, b):
    return primitive_forward("sub", (a, b))


def mul(a, b):
    return primitive_forward("mul", (a, b))


def div(a, b):
    return primitive_forward("div", (a, b))


def matmul(a, b):
    return primitive_forward("matmul", (a, b))


def transpose(a):
    return primitive_forward("transpose", (a,))


def reshape(a, shape):
    return primitive_forward("reshape", (a,), {"shape": tuple(shape)})


def concat(xs, axis=-1):
    return primitive_forward("concat", tuple(xs), {"axis": axis})


def stack(xs, axis=0):
    return primitive_forward("stack", tuple(xs), {"axis": axis})


def slice_axis(a, start, stop, axis=-1):
    return primitive_forward("slice", (a,), {"start": start, "stop": stop, "axis": axis})


def sum(a, axis=None, keepdims=False):  # noqa: A001
    return primitive_forward("sum", (a,), {"axis": axis, "keepdims": keepdims})


def mean(a, axis=None, keepdims=False):
    return primitive_forward("mean", (a,), {"axis": axis, "keepdims": keepdims})


def relu(a):
    return primitive_forward("relu", (a,))


def tanh(a):
    return primitive_forward("tanh", (a,))


def sigmoid(a):
    return primitive_forward("sigmoid", (a,))


def exp(a):
    return primitive_forward("exp", (a,))


def log(a, eps=None):
    return primitive_forward("log", (a,), {"eps": eps})


def sqrt(a):
    return primitive_forward("sqrt", (a,))


def softmax(a, axis=-1):
    return primitive_forward("softmax", (a,), {"axis": axis})


def layer_norm(x, gamma, beta, eps=1e-5):
    return primitive_forward("layer_norm", (x, gamma, beta), {"eps": eps})


def dropout(a, p, training, rng=None):
    return primitive_forward("dropout", (a,), {"p": p, "training": training, "rng": rng})


def scale_grad(a, factor):
    return primitive_forward("scale_grad", (a,), {"factor": factor})


def embedding(table, ids):
    return primitive_forward("embedding", (table,), {"ids": np.asarray(ids, dtype=np.int64)})


def segment_sum(values, segment_ids, num_segments):
    return primitive_forward(
        "segment_sum", (values,), {"segment_ids": np.asarray(segment_ids, dtype=np.int64), "num_segments": int(num_segments)}
    )


def segment_softmax(scores, segment_ids, num_segments):
    return primitive_forward(
        "segment_softmax",
        (scores,),
        {"segment_ids": np.asarray(segment_ids, dtype=np.int64), "num_segments": int(num_segments)},
    )
