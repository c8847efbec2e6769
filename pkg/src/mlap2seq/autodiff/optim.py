from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def init_for(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0
        return self


def adam_step(params, state):
    """Apply one bias-corrected Adam update in place. Gradients are left as they are."""
    params = list(params)
    if not state.m:
        state.init_for(params)
    if len(state.m) != len(params):
        raise ContractError(f"adam_step: state tracks {len(state.m)} params, got {len(params)}")
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"adam_step: parameter {p.name or i} has no gradient")
        if state.m[i].shape != p.shape:
            raise ContractError(f"adam_step: moment shape {state.m[i].shape} != parameter shape {p.shape}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype, copy=False)
    return params, state
