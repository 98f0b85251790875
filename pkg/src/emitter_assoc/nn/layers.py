"""
Layers with cached activations.

A layer's ``forward`` caches what ``backward`` needs; ``backward`` returns the
input gradient and stores parameter gradients in ``self.grads`` (parallel to
``self.params``). Inputs carry a leading batch axis.
"""

import numpy as np

from . import functional as F


class Layer:
    name = "layer"

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def astype(self, dtype):
        self.params = [p.astype(dtype) for p in self.params]
        self.grads = [g.astype(dtype) for g in self.grads]
        self._bind()
        return self

    def _bind(self):
        pass

    def __repr__(self):
        shapes = ", ".join(str(p.shape) for p in self.params)
        return f"{type(self).__name__}({shapes})"


def lecun_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


class Conv1d(Layer):
    name = "conv1d"

    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, padding="valid", dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel
        self.params = [lecun_normal(rng, (out_channels, in_channels, kernel), fan_in, dtype),
                       np.zeros(out_channels, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._bind()

    def _bind(self):
        self.weight, self.bias = self.params

    def forward(self, x):
        out, self._cols = F._conv1d_forward_cols(x, self.weight, self.bias, self.stride, self.padding)
        self._x = x
        return out

    def backward(self, grad):
        gx, gw, gb = F.conv1d_backward(grad, self._x, self.weight, self.stride, self.padding, cols=self._cols)
        self.grads[0][...] = gw
        self.grads[1][...] = gb
        self._cols = None
        return gx


class Dense(Layer):
    name = "dense"

    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        super().__init__()
        self.params = [lecun_normal(rng, (n_out, n_in), n_in, dtype), np.zeros(n_out, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._bind()

    def _bind(self):
        self.weight, self.bias = self.params

    def forward(self, x):
        self._x = x
        return F.dense_forward(x, self.weight, self.bias)

    def backward(self, grad):
        gx, gw, gb = F.dense_backward(grad, self._x, self.weight)
        self.grads[0][...] = gw
        self.grads[1][...] = gb
        return gx


class Selu(Layer):
    name = "selu"

    def __init__(self, params=F.CANONICAL_SELU):
        super().__init__()
        self.selu_params = params

    def forward(self, x):
        self._x = x
        return F.selu(x, self.selu_params)

    def backward(self, grad):
        return grad * F.selu_grad(self._x, self.selu_params)


class Tanh(Layer):
    name = "tanh"

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1 - self._y * self._y)


class Flatten(Layer):
    name = "flatten"

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class GlobalAvgPool(Layer):
    name = "global_avg_pool"

    def forward(self, x):
        self._length = x.shape[-1]
        return F.global_average_pool(x)

    def backward(self, grad):
        return F.global_average_pool_backward(grad, self._length)


class Sequential(Layer):
    name = "sequential"

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        self._bind()

    def _bind(self):
        self.params = [p for layer in self.layers for p in layer.params]
        self.grads = [g for layer in self.layers for g in layer.grads]

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        self._bind()
        return self

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def __repr__(self):
        return "Sequential(\n  " + ",\n  ".join(map(repr, self.layers)) + "\n)"
