"""Layers of the minimal sequential engine.

Each layer owns its parameters, caches whatever its backward pass needs
during forward, and exposes ``params``/``grads`` lists in declaration
order.  Convolutions are 3x3, stride 1, zero-padded to preserve spatial
size ("same"); only pooling layers shrink the feature map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .activations import ActivationKind, act_deriv, act_eval
from .errors import InvalidConfig, ShapeMismatch, StaleState
from .qactivation import QActivationLayer
from .sampling import QSampleConfig, RngState


@dataclass
class LayerContext:
    """Per-call flags threaded through the stack.

    ``frozen=True`` makes stochastic layers (dropout, q-activation) reuse
    their cached draws, which finite-difference checks rely on.
    """

    training: bool = True
    lambda_now: Optional[float] = None
    rng: Optional[RngState] = None
    frozen: bool = False


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: RngState, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


class Layer:
    def build(self, input_shape: tuple, rng: RngState, dtype) -> tuple:
        """Initialize parameters for the given per-sample input shape and
        return the per-sample output shape."""
        return input_shape

    def forward(self, x: np.ndarray, ctx: LayerContext) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def params(self) -> List[np.ndarray]:
        return []

    @property
    def grads(self) -> List[np.ndarray]:
        return []

    def state_arrays(self) -> List[np.ndarray]:
        """Arrays persisted in checkpoints: parameters plus any buffers."""
        return self.params


class Dense(Layer):
    """Affine map; inputs with trailing structure are flattened per sample."""

    def __init__(self, out_dim: int):
        if out_dim < 1:
            raise InvalidConfig(f"Dense out_dim must be >= 1, got {out_dim}")
        self.out_dim = out_dim
        self.w = None
        self.b = None
        self.dw = None
        self.db = None
        self._x2d = None
        self._in_shape = None

    def build(self, input_shape, rng, dtype):
        in_dim = int(np.prod(input_shape))
        self.w = glorot_uniform((in_dim, self.out_dim), in_dim, self.out_dim, rng, dtype)
        self.b = np.zeros(self.out_dim, dtype=dtype)
        return (self.out_dim,)

    def forward(self, x, ctx):
        self._in_shape = x.shape
        self._x2d = x.reshape(x.shape[0], -1)
        if self._x2d.shape[1] != self.w.shape[0]:
            raise ShapeMismatch(
                f"Dense expected {self.w.shape[0]} features, got {self._x2d.shape[1]}"
            )
        return self._x2d @ self.w + self.b

    def backward(self, grad):
        self.dw = self._x2d.T @ grad
        self.db = grad.sum(axis=0)
        return (grad @ self.w.T).reshape(self._in_shape)

    @property
    def params(self):
        return [self.w, self.b]

    @property
    def grads(self):
        return [self.dw, self.db]


class Conv2D(Layer):
    """3x3 convolution on NHWC tensors, stride 1, zero-padded to same size."""

    def __init__(self, features: int, kernel: int = 3):
        if features < 1:
            raise InvalidConfig(f"Conv2D features must be >= 1, got {features}")
        if kernel % 2 != 1:
            raise InvalidConfig(f"Conv2D kernel must be odd, got {kernel}")
        self.features = features
        self.kernel = kernel
        self.w = None
        self.b = None
        self.dw = None
        self.db = None
        self._cols = None
        self._x_shape = None

    def build(self, input_shape, rng, dtype):
        if len(input_shape) != 3:
            raise ShapeMismatch(f"Conv2D needs (H, W, C) input, got {input_shape}")
        h, w_, c = input_shape
        k = self.kernel
        self.w = glorot_uniform(
            (k * k * c, self.features), k * k * c, k * k * self.features, rng, dtype
        )
        self.b = np.zeros(self.features, dtype=dtype)
        self._in_channels = c
        return (h, w_, self.features)

    def _im2col(self, x):
        n, h, w_, c = x.shape
        k = self.kernel
        pad = k // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        cols = np.empty((n, h, w_, k, k, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i, j, :] = xp[:, i : i + h, j : j + w_, :]
        return cols.reshape(n * h * w_, k * k * c)

    def forward(self, x, ctx):
        if x.ndim != 4 or x.shape[3] != self._in_channels:
            raise ShapeMismatch(f"Conv2D expected (N, H, W, {self._in_channels}), got {x.shape}")
        self._x_shape = x.shape
        self._cols = self._im2col(x)
        n, h, w_, _ = x.shape
        out = self._cols @ self.w + self.b
        return out.reshape(n, h, w_, self.features)

    def backward(self, grad):
        n, h, w_, c = self._x_shape
        k = self.kernel
        pad = k // 2
        gmat = grad.reshape(n * h * w_, self.features)
        self.dw = self._cols.T @ gmat
        self.db = gmat.sum(axis=0)
        dcols = (gmat @ self.w.T).reshape(n, h, w_, k, k, c)
        dxp = np.zeros((n, h + 2 * pad, w_ + 2 * pad, c), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + h, j : j + w_, :] += dcols[:, :, :, i, j, :]
        return dxp[:, pad : pad + h, pad : pad + w_, :]

    @property
    def params(self):
        return [self.w, self.b]

    @property
    def grads(self):
        return [self.dw, self.db]


class MaxPool2x2(Layer):
    """2x2 max pooling with stride 2; spatial dims must be even."""

    def __init__(self):
        self._idx = None
        self._x_shape = None

    def build(self, input_shape, rng, dtype):
        if len(input_shape) != 3:
            raise ShapeMismatch(f"MaxPool2x2 needs (H, W, C) input, got {input_shape}")
        h, w_, c = input_shape
        if h % 2 or w_ % 2:
            raise ShapeMismatch(f"MaxPool2x2 needs even spatial dims, got {h}x{w_}")
        return (h // 2, w_ // 2, c)

    def forward(self, x, ctx):
        n, h, w_, c = x.shape
        self._x_shape = x.shape
        xr = (
            x.reshape(n, h // 2, 2, w_ // 2, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, h // 2, w_ // 2, c, 4)
        )
        self._idx = xr.argmax(axis=-1)
        return np.take_along_axis(xr, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, h, w_, c = self._x_shape
        gr = np.zeros((n, h // 2, w_ // 2, c, 4), dtype=grad.dtype)
        np.put_along_axis(gr, self._idx[..., None], grad[..., None], axis=-1)
        return (
            gr.reshape(n, h // 2, w_ // 2, c, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, h, w_, c)
        )


class BatchNorm(Layer):
    """Per-feature normalization over the batch (and spatial dims for NHWC).

    Batch statistics in training, running averages otherwise; statistics
    accumulate in double precision regardless of the storage dtype.  The
    running-average momentum is 0.99: with 0.9 a small trailing partial
    batch gets 10% of the running variance right before the post-epoch
    evaluation, which measurably distorts evaluation-mode losses.
    """

    EPS = 1e-5
    MOMENTUM = 0.99

    def __init__(self):
        self.gamma = None
        self.beta = None
        self.dgamma = None
        self.dbeta = None
        self.running_mean = None
        self.running_var = None
        self._cache = None

    def build(self, input_shape, rng, dtype):
        feat = input_shape[-1]
        self.gamma = np.ones(feat, dtype=dtype)
        self.beta = np.zeros(feat, dtype=dtype)
        self.running_mean = np.zeros(feat, dtype=np.float64)
        self.running_var = np.ones(feat, dtype=np.float64)
        return input_shape

    def forward(self, x, ctx):
        axes = tuple(range(x.ndim - 1))
        if ctx.training:
            mean = x.mean(axis=axes, dtype=np.float64)
            var = x.var(axis=axes, dtype=np.float64)
            self.running_mean *= self.MOMENTUM
            self.running_mean += (1.0 - self.MOMENTUM) * mean
            self.running_var *= self.MOMENTUM
            self.running_var += (1.0 - self.MOMENTUM) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv = (1.0 / np.sqrt(var + self.EPS)).astype(x.dtype)
        xhat = (x - mean.astype(x.dtype)) * inv
        m = int(np.prod([x.shape[a] for a in axes]))
        self._cache = (xhat, inv, axes, m, ctx.training)
        return self.gamma * xhat + self.beta

    def backward(self, grad):
        if self._cache is None:
            raise StaleState("BatchNorm backward before forward")
        xhat, inv, axes, m, training = self._cache
        self.dgamma = (grad * xhat).sum(axis=axes)
        self.dbeta = grad.sum(axis=axes)
        dxhat = grad * self.gamma
        if not training:
            return dxhat * inv
        return (
            inv
            / m
            * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        )

    @property
    def params(self):
        return [self.gamma, self.beta]

    @property
    def grads(self):
        return [self.dgamma, self.dbeta]

    def state_arrays(self):
        return [self.gamma, self.beta, self.running_mean, self.running_var]


class Dropout(Layer):
    """Inverted dropout: surviving units scaled by 1/(1-rate) at train time,
    identity at evaluation time."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise InvalidConfig(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None
        self._active = False

    def forward(self, x, ctx):
        self._active = ctx.training and self.rate > 0.0
        if not self._active:
            return x
        if ctx.frozen:
            if self._mask is None or self._mask.shape != x.shape:
                raise StaleState("frozen dropout forward without a cached mask")
        else:
            if ctx.rng is None:
                raise InvalidConfig("training-mode dropout needs an RngState")
            keep = ctx.rng.uniform(0.0, 1.0, x.shape) >= self.rate
            self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        if not self._active:
            return grad
        return grad * self._mask


class Flatten(Layer):
    def __init__(self):
        self._in_shape = None

    def build(self, input_shape, rng, dtype):
        return (int(np.prod(input_shape)),)

    def forward(self, x, ctx):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._in_shape)


class Activation(Layer):
    """Plain deterministic activation f, the like-for-like baseline."""

    def __init__(self, kind: ActivationKind):
        self.kind = kind
        self._x = None

    def forward(self, x, ctx):
        self._x = x
        return act_eval(self.kind, x)

    def backward(self, grad):
        return grad * act_deriv(self.kind, self._x, 1)


class QActivation(Layer):
    """Stochastic q-activation as an engine layer; see
    :class:`qneurons.qactivation.QActivationLayer`."""

    def __init__(
        self,
        kind: ActivationKind,
        sample_cfg: Optional[QSampleConfig] = None,
        eval_mode: str = "stochastic",
    ):
        self.inner = QActivationLayer(kind, sample_cfg, eval_mode)

    def forward(self, x, ctx):
        return self.inner.forward(
            x, training=ctx.training, lambda_now=ctx.lambda_now, rng=ctx.rng, frozen=ctx.frozen
        )

    def backward(self, grad):
        return self.inner.backward(grad)


class Softmax(Layer):
    """Row-wise softmax; caches logits and probabilities for the loss."""

    def __init__(self):
        self.last_logits = None
        self.last_probs = None

    def build(self, input_shape, rng, dtype):
        if len(input_shape) != 1:
            raise ShapeMismatch(f"Softmax needs flat (features,) input, got {input_shape}")
        return input_shape

    def forward(self, x, ctx):
        self.last_logits = x
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        self.last_probs = e / e.sum(axis=1, keepdims=True)
        return self.last_probs

    def backward(self, grad):
        p = self.last_probs
        return p * (grad - (grad * p).sum(axis=1, keepdims=True))
