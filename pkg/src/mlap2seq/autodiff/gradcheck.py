"""Central finite-difference verification of tape gradients."""

import numpy as np

from .tensor import ContractError, backward


def numeric_grad(fn, param, step=1e-6):
    """Central-difference estimate of d fn() / d param, one entry at a time."""
    flat = param.data.reshape(-1)
    out = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(fn().data)
        flat[i] = orig - step
        fm = float(fn().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * step)
    return out.reshape(param.shape)


def grad_check(fn, params, step=1e-6, floor=1e-6, per_param=False):
    """Compare tape gradients of the scalar ``fn()`` with central differences.

    ``fn`` takes no arguments and closes over ``params``. Returns the maximum
    over all entries of ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``,
    or a list of per-parameter maxima when ``per_param`` is set.
    """
    if step <= 0:
        raise ContractError("grad_check: step must be positive")
    params = list(params)
    first = fn()
    second = fn()
    if not np.array_equal(first.data, second.data):
        raise ContractError("grad_check: function is not deterministic (two forward passes disagree)")

    for p in params:
        p.grad = None
    backward(fn(), leaves=params)
    errors = []
    for p in params:
        analytic = np.asarray(p.grad, dtype=np.float64)
        numeric = numeric_grad(fn, p, step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        errors.append(float(np.max(np.abs(analytic - numeric) / denom)) if p.size else 0.0)
    if per_param:
        return errors
    return max(errors, default=0.0)
