"""Parameter containers shared by the encoder and decoders."""

import numpy as np

from .autodiff import Tensor, ops


class Module:
    """Walks its attributes for parameters and sub-modules, in definition order."""

    training = True

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif value.requires_grad:
                yield full, value

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def to(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype).copy()


def param(arr, dtype, name=None):
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True, name=name)


def glorot(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return param(rng.uniform(-limit, limit, size=(fan_in, fan_out)), dtype)


class Linear(Module):
    """Affine map ``x @ weight + bias`` with weight stored as (in, out)."""

    def __init__(self, rng, n_in, n_out, dtype=np.float32):
        self.weight = glorot(rng, n_in, n_out, dtype)
        self.bias = param(np.zeros(n_out), dtype)

    def __call__(self, x):
        return ops.add(ops.matmul(x, self.weight), self.bias)


class Embedding(Module):
    def __init__(self, rng, num, dim, dtype=np.float32, std=0.02):
        self.weight = param(rng.normal(0.0, std, size=(num, dim)), dtype)

    def __len__(self):
        return self.weight.shape[0]

    def __call__(self, ids):
        return ops.embedding(self.weight, ids)
