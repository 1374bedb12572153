"""Parameter containers and the small set of layers the model needs."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor


def parameter(data):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class Module:
    """Minimal container: parameters are ``Tensor`` attributes with
    ``requires_grad``; buffers are ndarrays registered via ``register_buffer``;
    child modules may sit in attributes or in lists."""

    training = True

    def register_buffer(self, name, value):
        self.__dict__.setdefault("_buffer_names", []).append(name)
        setattr(self, name, np.array(value, dtype=np.float64))

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in self.__dict__.get("_buffer_names", []):
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_dict(self):
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks entries: {sorted(missing)}")
        for name, value in state.items():
            if name in params:
                target = params[name].data
            elif name in buffers:
                target = buffers[name]
            else:
                raise KeyError(f"unexpected checkpoint entry {name!r}")
            if target.shape != np.shape(value):
                raise ValueError(
                    f"{name}: checkpoint shape {np.shape(value)} != model shape {target.shape}")
            target[...] = value

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode=True):
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        self.weight = parameter(_uniform(rng, d_in, (d_in, d_out)))
        self.bias = parameter(_uniform(rng, d_in, (d_out,))) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, padding=0, bias=True):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        fan_in = c_in * kh * kw
        self.weight = parameter(_uniform(rng, fan_in, (c_out, c_in, kh, kw)))
        self.bias = parameter(_uniform(rng, fan_in, (c_out,))) if bias else None
        self.padding = padding

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, padding=self.padding)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, bias=True):
        fan_in = c_in * kernel
        self.weight = parameter(_uniform(rng, fan_in, (c_out, c_in, kernel)))
        self.bias = parameter(_uniform(rng, fan_in, (c_out,))) if bias else None
        self.stride = stride

    def forward(self, x):
        return ops.conv1d(x, self.weight, self.bias, stride=self.stride)


class BatchNorm(Module):
    """Batch normalisation over axis 1 of any-rank input."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return ops.batchnorm(x, self.gamma, self.beta, self.running_mean,
                             self.running_var, self.training,
                             momentum=self.momentum, eps=self.eps)
