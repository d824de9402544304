"""Layers with hand-written backward passes.

Activations are time-major: ``(batch, frames, channels)``. Each layer keeps
what its backward pass needs from the most recent training-mode forward call,
exposes trainable arrays in ``params`` and fills ``grads`` with matching keys.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        """Non-trainable arrays that belong in a checkpoint."""
        return {}


class Conv1d(Layer):
    """1-D convolution over frames, stride 1, zero 'same' padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.kernel = kernel
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel - 1 - self.pad_left
        scale = np.sqrt(2.0 / (kernel * in_ch))
        self.params["W"] = rng.standard_normal((kernel, in_ch, out_ch)) * scale
        self.params["b"] = np.zeros(out_ch)
        self._cols = None
        self._shape = None

    def _im2col(self, x):
        xp = np.pad(x, ((0, 0), (self.pad_left, self.pad_right), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=1)
        # (B, T, C, K) -> (B, T, K, C)
        return np.ascontiguousarray(win.transpose(0, 1, 3, 2))

    def forward(self, x, train=False):
        B, T, C = x.shape
        W = self.params["W"]
        cols = self._im2col(x).reshape(B * T, self.kernel * C)
        out = cols @ W.reshape(-1, W.shape[2]) + self.params["b"]
        if train:
            self._cols = cols
            self._shape = x.shape
        return out.reshape(B, T, -1)

    def backward(self, grad):
        B, T, C = self._shape
        W = self.params["W"]
        g = grad.reshape(B * T, -1)
        self.grads["W"] = (self._cols.T @ g).reshape(W.shape)
        self.grads["b"] = g.sum(axis=0)
        dcols = (g @ W.reshape(-1, W.shape[2]).T).reshape(B, T, self.kernel, C)
        dxp = np.zeros((B, T + self.kernel - 1, C))
        for j in range(self.kernel):
            dxp[:, j : j + T] += dcols[:, :, j, :]
        return dxp[:, self.pad_left : self.pad_left + T]


class BatchNorm1d(Layer):
    """Per-channel normalization over batch and time."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.normalized = None
        self._inv_std = None

    def forward(self, x, train=False):
        if train:
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            n = x.shape[0] * x.shape[1]
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            unbiased = var * n / max(n - 1, 1)
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            self.normalized = xhat
            self._inv_std = inv_std
        else:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, grad):
        xhat = self.normalized
        n = xhat.shape[0] * xhat.shape[1]
        self.grads["gamma"] = (grad * xhat).sum(axis=(0, 1))
        self.grads["beta"] = grad.sum(axis=(0, 1))
        dxhat = grad * self.params["gamma"]
        return (self._inv_std / n) * (
            n * dxhat - dxhat.sum(axis=(0, 1)) - xhat * (dxhat * xhat).sum(axis=(0, 1))
        )

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class ReLU(Layer):
    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class GlobalMaxPool(Layer):
    """Max over the frame axis: ``(B, T, C) -> (B, C)``. Ties go to the first frame."""

    def forward(self, x, train=False):
        idx = np.argmax(x, axis=1)
        if train:
            self._idx = idx
            self._shape = x.shape
        return np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :]

    def backward(self, grad):
        out = np.zeros(self._shape)
        np.put_along_axis(out, self._idx[:, None, :], grad[:, None, :], axis=1)
        return out


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x, train=False):
        if not train or self.rate == 0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.params["W"] = rng.standard_normal((in_dim, out_dim)) * np.sqrt(1.0 / in_dim)
        self.params["b"] = np.zeros(out_dim)

    def forward(self, x, train=False):
        if train:
            self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        self.grads["W"] = self._x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class GradReverse(Layer):
    """Identity forward; multiplies the backward gradient by ``-lam``."""

    def __init__(self, lam: float = 1.0):
        super().__init__()
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        self.lam = float(lam)

    def forward(self, x, train=False):
        return x

    def backward(self, grad):
        return -self.lam * grad


def grad_reverse(x: np.ndarray, lam: float) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Functional form: returns ``(x, backward_fn)``."""
    layer = GradReverse(lam)
    return layer.forward(x), layer.backward
