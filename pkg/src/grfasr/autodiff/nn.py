"""Parameter containers and the small layer library the models are built from."""

from collections import OrderedDict

import numpy as np

from . import tensor as ad
from .tensor import Tensor


class Parameter(Tensor):
    """A named leaf tensor. ``trainable=False`` marks a fixed buffer."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name="", trainable=True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable


class Module:
    """Tree of parameters and sub-modules, registered by attribute assignment."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._modules[key] = value
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix="", include_buffers=True):
        for key, p in self._params.items():
            if include_buffers or p.trainable:
                p.name = prefix + key
                yield p.name, p
        for key, m in self._modules.items():
            yield from m.named_parameters(prefix + key + ".", include_buffers)

    def parameters(self, include_buffers=False):
        return [p for _, p in self.named_parameters(include_buffers=include_buffers)]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters(include_buffers=True):
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        super().__init__()
        bound = 1.0 / np.sqrt(d_in)
        self.weight = Parameter(_uniform(rng, (d_in, d_out), bound))
        self.has_bias = bias
        if bias:
            self.bias = Parameter(np.zeros(d_out))

    def forward(self, x):
        y = ad.matmul(x, self.weight)
        return y + self.bias if self.has_bias else y


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, num, dim, rng):
        super().__init__()
        self.weight = Parameter(rng.normal(0.0, dim ** -0.5, size=(num, dim)))

    def forward(self, ids):
        return ad.embedding(self.weight, ids)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=0):
        super().__init__()
        bound = 1.0 / np.sqrt(c_in * kernel * kernel)
        self.weight = Parameter(_uniform(rng, (c_out, c_in, kernel, kernel), bound))
        self.bias = Parameter(np.zeros(c_out))
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class LSTMDirection(Module):
    """Weights of one LSTM direction; forget-gate bias starts at 1."""

    def __init__(self, d_in, hidden, rng):
        super().__init__()
        bound = 1.0 / np.sqrt(hidden)
        self.w_ih = Parameter(_uniform(rng, (d_in, 4 * hidden), bound))
        self.w_hh = Parameter(_uniform(rng, (hidden, 4 * hidden), bound))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        self.bias = Parameter(b)

    def forward(self, x, reverse=False):
        return ad.lstm(x, self.w_ih, self.w_hh, self.bias, reverse=reverse)


class BLSTM(Module):
    """Stack of bidirectional LSTM layers; each layer emits ``[fwd; bwd]``.

    Dropout (when ``dropout > 0`` and training) is applied to every layer's
    output.
    """

    def __init__(self, d_in, hidden, layers, rng, dropout=0.0):
        super().__init__()
        if layers < 1 or hidden < 1:
            raise ValueError("BLSTM needs layers >= 1 and hidden >= 1")
        self.hidden = hidden
        self.layers = layers
        self.dropout = dropout
        self.rng = rng
        for k in range(layers):
            setattr(self, f"l{k}_fwd", LSTMDirection(d_in if k == 0 else 2 * hidden, hidden, rng))
            setattr(self, f"l{k}_bwd", LSTMDirection(d_in if k == 0 else 2 * hidden, hidden, rng))

    @property
    def out_dim(self):
        return 2 * self.hidden

    def forward(self, x):
        h = x
        for k in range(self.layers):
            fwd = getattr(self, f"l{k}_fwd")(h)
            bwd = getattr(self, f"l{k}_bwd")(h, reverse=True)
            h = ad.concat([fwd, bwd], axis=-1)
            h = ad.dropout(h, self.dropout, self.rng, self.training)
        return h
