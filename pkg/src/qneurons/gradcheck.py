"""Finite-difference verification of every layer's backward pass.

Each layer is checked in isolation through a fixed linear readout
loss = sum(R * layer(x)), and the composed MLP preset is checked at toy
width through its cross-entropy loss.  All checks run in double
precision with the stochastic draws (q tensors, dropout masks) frozen,
comparing reverse-mode gradients against central differences.
"""
from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from . import layers as L
from .activations import ActivationKind
from .layers import LayerContext
from .network import Network, loss_and_grad, mlp_spec, network_loss
from .sampling import QSampleConfig, RngState

DEFAULT_H = 1e-5
REL_TOL = 1e-4


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor); the floor turns near-zero entries
    into an absolute comparison."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def finite_diff(loss_fn: Callable[[], float], arrays: List[np.ndarray], h: float = DEFAULT_H):
    """Central-difference gradient of a scalar loss w.r.t. each array,
    perturbing entries in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gf[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def check_layer(layer: L.Layer, x: np.ndarray, rng: RngState, training: bool = True) -> float:
    """Max relative error between reverse-mode and central differences for
    one layer, over input and parameter gradients."""
    x = np.array(x, dtype=np.float64)
    layer.build(x.shape[1:], rng, np.float64)
    ctx = LayerContext(training=training, lambda_now=0.5, rng=rng, frozen=False)
    y = layer.forward(x, ctx)
    readout = RngState(7).standard_normal(y.shape)

    frozen_ctx = LayerContext(training=training, lambda_now=0.5, rng=rng, frozen=True)

    def loss():
        return float((layer.forward(x, frozen_ctx) * readout).sum())

    base = loss()  # realize caches with the frozen draws
    assert np.isfinite(base)
    dx = layer.backward(readout.astype(np.float64))
    dparams = [np.array(g, dtype=np.float64) for g in layer.grads]

    fd_x = finite_diff(loss, [x])[0]
    err = relative_error(dx, fd_x)
    if layer.params:
        fd_p = finite_diff(loss, layer.params)
        for got, want in zip(dparams, fd_p):
            err = max(err, relative_error(got, want))
    return err


def check_softmax_cross_entropy() -> float:
    """The fused softmax/cross-entropy gradient against central differences
    of the loss at the logits."""
    rng = RngState(11)
    logits = rng.standard_normal((5, 4))
    y = np.array([0, 3, 1, 2, 2])
    sm = L.Softmax()
    ctx = LayerContext(training=True)

    def loss():
        probs = sm.forward(logits, ctx)
        n = probs.shape[0]
        return float(-np.mean(np.log(probs[np.arange(n), y])))

    probs = sm.forward(logits, ctx)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(y)), y] = 1.0
    analytic = (probs - onehot) / len(y)
    fd = finite_diff(loss, [logits])[0]
    return relative_error(analytic, fd)


def check_composite(
    input_dim: int = 8, hidden: int = 5, classes: int = 3, batch: int = 4
) -> float:
    """Toy-width MLP preset (dense + q-activation + batchnorm + dropout)
    checked end to end through its cross-entropy loss."""
    spec = mlp_spec(
        input_shape=(input_dim,),
        hidden=hidden,
        classes=classes,
        kind=ActivationKind("tanh"),
        q_mode="fixed",
        sample_cfg=QSampleConfig(lambda0=0.5, phi=1e-3),
        dropout=True,
        dropout_rate=0.2,
    )
    rng = RngState(3)
    net = Network(spec, rng, dtype=np.float64)
    x = RngState(5).standard_normal((batch, input_dim))
    y = np.array([0, 1, 2, 1])

    _, grads = loss_and_grad(net, x, y, training=True, lambda_now=0.5, rng=rng)
    grads = [np.array(g) for g in grads]

    def loss():
        return network_loss(net, x, y, training=True, frozen=True)

    fd = finite_diff(loss, net.params())
    err = 0.0
    for got, want in zip(grads, fd):
        err = max(err, relative_error(got, want))
    return err


def run_suite() -> Dict[str, float]:
    """Run every check and return the max relative error per check."""
    results: Dict[str, float] = {}

    def x(shape, seed):
        return RngState(seed).standard_normal(shape)

    results["dense"] = check_layer(L.Dense(4), x((3, 6), 1), RngState(10))
    results["conv2d"] = check_layer(L.Conv2D(3), x((2, 6, 6, 2), 2), RngState(11))
    results["maxpool2x2"] = check_layer(L.MaxPool2x2(), x((2, 4, 4, 2), 3), RngState(12))
    results["batchnorm_train"] = check_layer(L.BatchNorm(), x((6, 5), 4), RngState(13))
    results["batchnorm_eval"] = check_layer(
        L.BatchNorm(), x((6, 5), 4), RngState(13), training=False
    )
    results["batchnorm_conv"] = check_layer(L.BatchNorm(), x((3, 4, 4, 2), 5), RngState(14))
    results["dropout"] = check_layer(L.Dropout(0.3), x((4, 7), 6), RngState(15))
    results["flatten"] = check_layer(L.Flatten(), x((3, 2, 2, 2), 7), RngState(16))
    for tag in ("sigmoid", "tanh", "softplus", "elu"):
        results[f"activation_{tag}"] = check_layer(
            L.Activation(ActivationKind(tag)), x((3, 5), 8), RngState(17)
        )
        results[f"q_activation_{tag}"] = check_layer(
            L.QActivation(ActivationKind(tag), QSampleConfig(0.5, phi=1e-3)),
            x((3, 5), 9),
            RngState(18),
        )
        results[f"q_activation_limit_{tag}"] = check_layer(
            L.QActivation(ActivationKind(tag), eval_mode="limit"), x((3, 5), 9), RngState(19)
        )
    results["softmax_cross_entropy"] = check_softmax_cross_entropy()
    results["composite_mlp"] = check_composite()
    return results


def max_error(results: Dict[str, float]) -> float:
    return max(results.values())
