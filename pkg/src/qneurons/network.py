"""Declarative network specs, the two MNIST presets, and the training-side
operations: forward, cross-entropy loss with exact reverse-mode gradients,
the SGD update, and a binary checkpoint format.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import layers as L
from .activations import ActivationKind
from .errors import InvalidConfig, ShapeMismatch, TruncatedFile, BadMagic
from .layers import LayerContext
from .sampling import QSampleConfig, RngState

# ---------------------------------------------------------------------------
# Layer and network specs


@dataclass(frozen=True)
class DenseSpec:
    out_dim: int


@dataclass(frozen=True)
class Conv2DSpec:
    features: int
    kernel: int = 3


@dataclass(frozen=True)
class MaxPool2x2Spec:
    pass


@dataclass(frozen=True)
class BatchNormSpec:
    pass


@dataclass(frozen=True)
class DropoutSpec:
    rate: float


@dataclass(frozen=True)
class FlattenSpec:
    pass


@dataclass(frozen=True)
class ActivationSpec:
    kind: ActivationKind


@dataclass(frozen=True)
class QActivationSpec:
    kind: ActivationKind
    sample_cfg: Optional[QSampleConfig] = None
    eval_mode: str = "stochastic"


@dataclass(frozen=True)
class SoftmaxSpec:
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: Tuple[int, ...]
    layers: Tuple = field(default_factory=tuple)


Q_MODES = ("baseline", "fixed", "annealed", "limit")


def _act_spec(kind: ActivationKind, q_mode: str, sample_cfg: Optional[QSampleConfig]):
    """One (q-)activation slot of a preset, resolved per the run mode."""
    if q_mode == "baseline":
        return ActivationSpec(kind)
    if q_mode == "limit":
        return QActivationSpec(kind, sample_cfg, eval_mode="limit")
    if q_mode in ("fixed", "annealed"):
        return QActivationSpec(kind, sample_cfg, eval_mode="stochastic")
    raise InvalidConfig(f"q_mode must be one of {Q_MODES}, got {q_mode!r}")


def mlp_spec(
    input_shape=(28, 28),
    hidden: int = 256,
    classes: int = 10,
    kind: ActivationKind = ActivationKind("tanh"),
    q_mode: str = "baseline",
    sample_cfg: Optional[QSampleConfig] = None,
    dropout: bool = False,
    dropout_rate: float = 0.2,
) -> NetworkSpec:
    """Two hidden blocks of dense -> activation -> batchnorm (-> dropout),
    then a dense readout and softmax."""
    specs = []
    for _ in range(2):
        specs += [DenseSpec(hidden), _act_spec(kind, q_mode, sample_cfg), BatchNormSpec()]
        if dropout:
            specs.append(DropoutSpec(dropout_rate))
    specs += [DenseSpec(classes), SoftmaxSpec()]
    return NetworkSpec(tuple(input_shape), tuple(specs))


def mnist_mlp(
    kind: ActivationKind = ActivationKind("tanh"),
    q_mode: str = "baseline",
    sample_cfg: Optional[QSampleConfig] = None,
    dropout: bool = False,
) -> NetworkSpec:
    return mlp_spec((28, 28), 256, 10, kind, q_mode, sample_cfg, dropout)


def mnist_cnn(
    kind: ActivationKind = ActivationKind("tanh"),
    q_mode: str = "baseline",
    sample_cfg: Optional[QSampleConfig] = None,
    dropout: bool = False,
) -> NetworkSpec:
    act = lambda: _act_spec(kind, q_mode, sample_cfg)
    specs = [
        Conv2DSpec(32), act(), BatchNormSpec(),
        Conv2DSpec(32), act(), MaxPool2x2Spec(), BatchNormSpec(),
        Conv2DSpec(64), act(), BatchNormSpec(),
        Conv2DSpec(64), act(), MaxPool2x2Spec(),
        FlattenSpec(), BatchNormSpec(),
        DenseSpec(512), act(), BatchNormSpec(),
    ]
    if dropout:
        specs.append(DropoutSpec(0.2))
    specs += [DenseSpec(10), SoftmaxSpec()]
    return NetworkSpec((28, 28, 1), tuple(specs))


PRESETS = {"mnist_mlp": mnist_mlp, "mnist_cnn": mnist_cnn}


def _instantiate(spec) -> L.Layer:
    if isinstance(spec, DenseSpec):
        return L.Dense(spec.out_dim)
    if isinstance(spec, Conv2DSpec):
        return L.Conv2D(spec.features, spec.kernel)
    if isinstance(spec, MaxPool2x2Spec):
        return L.MaxPool2x2()
    if isinstance(spec, BatchNormSpec):
        return L.BatchNorm()
    if isinstance(spec, DropoutSpec):
        return L.Dropout(spec.rate)
    if isinstance(spec, FlattenSpec):
        return L.Flatten()
    if isinstance(spec, ActivationSpec):
        return L.Activation(spec.kind)
    if isinstance(spec, QActivationSpec):
        return L.QActivation(spec.kind, spec.sample_cfg, spec.eval_mode)
    if isinstance(spec, SoftmaxSpec):
        return L.Softmax()
    raise InvalidConfig(f"unknown layer spec {spec!r}")


# ---------------------------------------------------------------------------
# Runtime network


class Network:
    """A built sequential stack with deterministic initialization.

    Weights are drawn from ``rng`` in declaration order, so the same spec,
    seed, and dtype always produce the same network.
    """

    def __init__(self, spec: NetworkSpec, rng: RngState, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layers: List[L.Layer] = [_instantiate(s) for s in spec.layers]
        shape = tuple(spec.input_shape)
        for layer in self.layers:
            shape = layer.build(shape, rng, self.dtype)
        self.output_shape = shape

    def forward(
        self,
        x: np.ndarray,
        training: bool = True,
        lambda_now: Optional[float] = None,
        rng: Optional[RngState] = None,
        frozen: bool = False,
    ) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != tuple(self.spec.input_shape):
            raise ShapeMismatch(
                f"input shape {x.shape[1:]} does not match spec {self.spec.input_shape}"
            )
        ctx = LayerContext(training=training, lambda_now=lambda_now, rng=rng, frozen=frozen)
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, ctx)
            except ShapeMismatch as e:
                raise ShapeMismatch(f"layer {i} ({type(layer).__name__}): {e}") from None
        return x

    def params(self) -> List[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def grads(self) -> List[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def state_arrays(self) -> List[np.ndarray]:
        return [a for layer in self.layers for a in layer.state_arrays()]


def recalibrate_batchnorm(
    net: Network,
    x: np.ndarray,
    lambda_now: Optional[float] = None,
    rng: Optional[RngState] = None,
    max_samples: int = 4096,
) -> None:
    """Refresh every BatchNorm's running statistics from one large pass.

    Per-batch running averages lag the weights and are perturbed by small
    trailing batches, which visibly distorts post-epoch evaluation losses
    at desk scale.  This recomputes each normalization's statistics from
    the activations the current weights actually produce (dropout off,
    stochastic activations in their evaluation-time behavior).
    """
    h = np.asarray(x[:max_samples], dtype=net.dtype)
    ctx = LayerContext(training=False, lambda_now=lambda_now, rng=rng)
    for layer in net.layers:
        if isinstance(layer, L.BatchNorm):
            axes = tuple(range(h.ndim - 1))
            layer.running_mean[...] = h.mean(axis=axes, dtype=np.float64)
            layer.running_var[...] = h.var(axis=axes, dtype=np.float64)
        h = layer.forward(h, ctx)


def _check_labels(y: np.ndarray, classes: int):
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= classes):
        raise InvalidConfig(f"labels must lie in [0, {classes}), got range [{y.min()}, {y.max()}]")
    return y


def cross_entropy_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy computed from logits in double precision."""
    z = np.asarray(logits, dtype=np.float64)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.mean(lse - z[np.arange(z.shape[0]), y]))


def network_loss(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    training: bool = True,
    lambda_now: Optional[float] = None,
    rng: Optional[RngState] = None,
    frozen: bool = False,
) -> float:
    """Forward pass plus mean cross-entropy; no gradients."""
    if not isinstance(net.layers[-1], L.Softmax):
        raise InvalidConfig("cross-entropy loss expects a Softmax final layer")
    net.forward(x, training=training, lambda_now=lambda_now, rng=rng, frozen=frozen)
    softmax = net.layers[-1]
    y = _check_labels(y, softmax.last_logits.shape[1])
    return cross_entropy_from_logits(softmax.last_logits, y)


def loss_and_grad(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    training: bool = True,
    lambda_now: Optional[float] = None,
    rng: Optional[RngState] = None,
    frozen: bool = False,
) -> Tuple[float, List[np.ndarray]]:
    """Mean cross-entropy over the batch and exact reverse-mode gradients
    of the realized stochastic forward (q draws and dropout masks frozen).

    The softmax/cross-entropy pair backpropagates its fused analytic
    gradient (probs - onehot) / batch from the logits.
    """
    if not isinstance(net.layers[-1], L.Softmax):
        raise InvalidConfig("cross-entropy loss expects a Softmax final layer")
    probs = net.forward(x, training=training, lambda_now=lambda_now, rng=rng, frozen=frozen)
    softmax = net.layers[-1]
    n, classes = probs.shape
    y = _check_labels(y, classes)
    loss = cross_entropy_from_logits(softmax.last_logits, y)

    dlogits = probs.astype(np.float64)
    dlogits[np.arange(n), y] -= 1.0
    grad = (dlogits / n).astype(net.dtype)
    for layer in reversed(net.layers[:-1]):
        grad = layer.backward(grad)
    return loss, net.grads()


def sgd_step(net: Network, gradients: List[np.ndarray], lr_now: float) -> Network:
    """theta <- theta - lr * grad, in declaration order; the caller owns the
    per-batch learning-rate decay."""
    params = net.params()
    if len(params) != len(gradients):
        raise ShapeMismatch(f"got {len(gradients)} gradients for {len(params)} parameters")
    for p, g in zip(params, gradients):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match parameter {p.shape}")
        p -= np.asarray(lr_now * g, dtype=p.dtype)
    return net


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, JSON-described spec, then raw
# little-endian arrays in declaration order.

CKPT_MAGIC = b"QNEURNET"
CKPT_VERSION = 1


def _spec_to_dict(spec: NetworkSpec) -> dict:
    def kind_d(k: ActivationKind):
        return {"tag": k.tag, "alpha": k.alpha}

    def cfg_d(c: Optional[QSampleConfig]):
        if c is None:
            return None
        return {"lambda0": c.lambda0, "gamma": c.gamma, "phi": c.phi, "mode": c.mode}

    out = []
    for s in spec.layers:
        if isinstance(s, DenseSpec):
            out.append({"layer": "dense", "out_dim": s.out_dim})
        elif isinstance(s, Conv2DSpec):
            out.append({"layer": "conv2d", "features": s.features, "kernel": s.kernel})
        elif isinstance(s, MaxPool2x2Spec):
            out.append({"layer": "maxpool2x2"})
        elif isinstance(s, BatchNormSpec):
            out.append({"layer": "batchnorm"})
        elif isinstance(s, DropoutSpec):
            out.append({"layer": "dropout", "rate": s.rate})
        elif isinstance(s, FlattenSpec):
            out.append({"layer": "flatten"})
        elif isinstance(s, ActivationSpec):
            out.append({"layer": "activation", "kind": kind_d(s.kind)})
        elif isinstance(s, QActivationSpec):
            out.append(
                {
                    "layer": "q_activation",
                    "kind": kind_d(s.kind),
                    "sample_cfg": cfg_d(s.sample_cfg),
                    "eval_mode": s.eval_mode,
                }
            )
        elif isinstance(s, SoftmaxSpec):
            out.append({"layer": "softmax"})
        else:
            raise InvalidConfig(f"unknown layer spec {s!r}")
    return {"input_shape": list(spec.input_shape), "layers": out}


def _spec_from_dict(d: dict) -> NetworkSpec:
    def kind_d(k):
        return ActivationKind(k["tag"], k["alpha"])

    def cfg_d(c):
        if c is None:
            return None
        return QSampleConfig(c["lambda0"], c["gamma"], c["phi"], c["mode"])

    specs = []
    for s in d["layers"]:
        t = s["layer"]
        if t == "dense":
            specs.append(DenseSpec(s["out_dim"]))
        elif t == "conv2d":
            specs.append(Conv2DSpec(s["features"], s["kernel"]))
        elif t == "maxpool2x2":
            specs.append(MaxPool2x2Spec())
        elif t == "batchnorm":
            specs.append(BatchNormSpec())
        elif t == "dropout":
            specs.append(DropoutSpec(s["rate"]))
        elif t == "flatten":
            specs.append(FlattenSpec())
        elif t == "activation":
            specs.append(ActivationSpec(kind_d(s["kind"])))
        elif t == "q_activation":
            specs.append(QActivationSpec(kind_d(s["kind"]), cfg_d(s["sample_cfg"]), s["eval_mode"]))
        elif t == "softmax":
            specs.append(SoftmaxSpec())
        else:
            raise InvalidConfig(f"unknown layer type {t!r} in checkpoint")
    return NetworkSpec(tuple(d["input_shape"]), tuple(specs))


def save_checkpoint(net: Network, path) -> None:
    arrays = net.state_arrays()
    header = {
        "spec": _spec_to_dict(net.spec),
        "dtype": net.dtype.name,
        "arrays": [{"shape": list(a.shape), "dtype": a.dtype.name} for a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for a in arrays:
            f.write(np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise BadMagic(f"{path}: not a network checkpoint")
        version = struct.unpack("<I", f.read(4))[0]
        if version != CKPT_VERSION:
            raise InvalidConfig(f"{path}: unsupported checkpoint version {version}")
        blob_len = struct.unpack("<I", f.read(4))[0]
        header = json.loads(f.read(blob_len).decode("utf-8"))
        spec = _spec_from_dict(header["spec"])
        net = Network(spec, RngState(0), dtype=np.dtype(header["dtype"]))
        arrays = net.state_arrays()
        if len(arrays) != len(header["arrays"]):
            raise InvalidConfig(f"{path}: checkpoint array count does not match spec")
        for a, meta in zip(arrays, header["arrays"]):
            dt = np.dtype(meta["dtype"]).newbyteorder("<")
            raw = f.read(int(np.prod(meta["shape"])) * dt.itemsize)
            if len(raw) != int(np.prod(meta["shape"])) * dt.itemsize:
                raise TruncatedFile(f"{path}: checkpoint payload ends early")
            vals = np.frombuffer(raw, dtype=dt).reshape(meta["shape"])
            a[...] = vals.astype(a.dtype)
    return net
