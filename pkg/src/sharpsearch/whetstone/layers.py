"""NumPy layers with explicit forward/backward passes.

Image tensors are NHWC.  Every layer caches what its backward pass needs
during ``forward`` and leaves parameter gradients in ``self.grads``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, training: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    """Fully connected layer; flattens any trailing input dimensions."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None, bias: float = 0.5):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = rng or np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.full(n_out, float(bias))

    def forward(self, x, training: bool = False):
        self._shape = x.shape
        self._x = x.reshape(x.shape[0], -1)
        return self._x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return (dout @ self.params["W"].T).reshape(self._shape)


class Conv2D(Layer):
    """Stride-1 'same' convolution with odd square filters."""

    def __init__(self, c_in: int, c_out: int, size: int, rng: np.random.Generator | None = None, bias: float = 0.5):
        super().__init__()
        if size % 2 != 1:
            raise ValueError("filter size must be odd for same padding")
        self.c_in, self.c_out, self.size = c_in, c_out, size
        rng = rng or np.random.default_rng(0)
        fan_in, fan_out = size * size * c_in, size * size * c_out
        self.params["W"] = glorot_uniform(rng, (size, size, c_in, c_out), fan_in, fan_out)
        self.params["b"] = np.full(c_out, float(bias))

    def _cols(self, x):
        p = self.size // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        win = sliding_window_view(xp, (self.size, self.size), axis=(1, 2))  # N,H,W,C,f,f
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, self.size * self.size * self.c_in)

    def forward(self, x, training: bool = False):
        n, h, w, _ = x.shape
        self._shape = x.shape
        self._cols_cache = self._cols(x)
        out = self._cols_cache @ self.params["W"].reshape(-1, self.c_out) + self.params["b"]
        return out.reshape(n, h, w, self.c_out)

    def backward(self, dout):
        n, h, w, c = self._shape
        f, p = self.size, self.size // 2
        d2 = dout.reshape(-1, self.c_out)
        Wm = self.params["W"].reshape(-1, self.c_out)
        self.grads["W"] = (self._cols_cache.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] = d2.sum(axis=0)
        dcols = (d2 @ Wm.T).reshape(n, h, w, f, f, c)
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, c))
        for i in range(f):
            for j in range(f):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, p:p + h, p:p + w, :]


class MaxPool2D(Layer):
    """2x2, stride 2.  Odd trailing rows/columns are dropped."""

    def forward(self, x, training: bool = False):
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        self._shape = x.shape
        xs = x[:, :h2 * 2, :w2 * 2, :].reshape(n, h2, 2, w2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h2, w2, c, 4)
        self._arg = xs.argmax(axis=-1)
        return xs.max(axis=-1)

    def backward(self, dout):
        n, h, w, c = self._shape
        h2, w2 = h // 2, w // 2
        d = np.zeros((n, h2, w2, c, 4))
        np.put_along_axis(d, self._arg[..., None], dout[..., None], axis=-1)
        d = d.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h2 * 2, w2 * 2, c)
        dx = np.zeros(self._shape)
        dx[:, :h2 * 2, :w2 * 2, :] = d
        return dx


class BatchNorm(Layer):
    """Batch normalization over every axis but the last (features/channels).

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, n_features: int, momentum: float = 0.99, epsilon: float = 1e-3,
                 center: bool = True, scale: bool = True):
        super().__init__()
        self.n_features = n_features
        self.momentum, self.epsilon = float(momentum), float(epsilon)
        self.center, self.scale = bool(center), bool(scale)
        if self.scale:
            self.params["gamma"] = np.ones(n_features)
        if self.center:
            self.params["beta"] = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)

    def forward(self, x, training: bool = False):
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mean
            self.running_var = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv
        self._cache = (xhat, inv, axes)
        out = xhat
        if self.scale:
            out = out * self.params["gamma"]
        if self.center:
            out = out + self.params["beta"]
        return out

    def backward(self, dout):
        """Gradient through training-mode (batch statistics) normalization."""
        xhat, inv, axes = self._cache
        if self.center:
            self.grads["beta"] = dout.sum(axis=axes)
        if self.scale:
            self.grads["gamma"] = (dout * xhat).sum(axis=axes)
            dxhat = dout * self.params["gamma"]
        else:
            dxhat = dout
        m = xhat.size // xhat.shape[-1]
        return inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class GaussianNoise(Layer):
    """Adds N(0, std^2) noise at training time only."""

    def __init__(self, std: float):
        super().__init__()
        self.std = float(std)
        self.rng = np.random.default_rng(0)

    def forward(self, x, training: bool = False):
        if not training or self.std == 0:
            return x
        return x + self.rng.normal(0.0, self.std, size=x.shape)

    def backward(self, dout):
        return dout


def batchnorm_forward(layer: BatchNorm, batch, training: bool = True):
    return layer.forward(batch, training)


def batchnorm_backward(layer: BatchNorm, dout):
    return layer.backward(dout)


def noise_forward(std: float, batch, rng: np.random.Generator, training: bool):
    if not training or std == 0:
        return np.asarray(batch)
    return batch + rng.normal(0.0, std, size=np.shape(batch))
