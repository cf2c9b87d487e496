"""Experiment runner: trains a preset network under a given noise regime,
averages over seeded runs, and emits per-epoch metrics as CSV.

Every random decision of a run (weight init, batch order, q draws,
dropout masks, evaluation draws) comes from one per-run stream seeded
with base_seed + run_index, so a re-run with the same config reproduces
the metrics CSV byte for byte.  Wall-clock timings are written to a
separate sidecar file to keep the metrics deterministic.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .activations import ActivationKind
from .data import Dataset, iterate_minibatches, load_idx, subset
from .errors import InvalidConfig, NonFiniteLoss
from .network import (
    Network,
    NetworkSpec,
    PRESETS,
    loss_and_grad,
    network_loss,
    recalibrate_batchnorm,
)
from .network import sgd_step
from .sampling import DEFAULT_PHI, QSampleConfig, RngState, anneal_lambda

MNIST_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    lr0: float = 0.05
    lr_decay_per_batch: float = 1.0 - 1e-6
    momentum: float = 0.0
    seed: int = 0
    runs: int = 3

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidConfig(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr0 > 0:
            raise InvalidConfig(f"lr0 must be > 0, got {self.lr0}")
        if not 0.0 < self.lr_decay_per_batch <= 1.0:
            raise InvalidConfig(
                f"lr_decay_per_batch must be in (0, 1], got {self.lr_decay_per_batch}"
            )
        if self.momentum != 0.0:
            raise InvalidConfig("only momentum = 0 is supported (plain SGD engine)")
        if self.runs < 1:
            raise InvalidConfig(f"runs must be >= 1, got {self.runs}")


@dataclass
class ExperimentConfig:
    preset: str = "mnist_mlp"
    activation: ActivationKind = field(default_factory=lambda: ActivationKind("tanh"))
    q_mode: str = "baseline"  # baseline | fixed | annealed | limit
    lambda0: float = 0.02
    gamma: float = 0.5
    phi: float = DEFAULT_PHI
    dropout: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    data_dir: Optional[str] = None
    subset_train: Optional[int] = 10000
    subset_test: Optional[int] = 10000
    out_dir: Optional[str] = None
    eval_samples: int = 1

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise InvalidConfig(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        if self.q_mode not in ("baseline", "fixed", "annealed", "limit"):
            raise InvalidConfig(f"unknown q_mode {self.q_mode!r}")
        if self.eval_samples < 1:
            raise InvalidConfig(f"eval_samples must be >= 1, got {self.eval_samples}")

    def sample_cfg(self) -> Optional[QSampleConfig]:
        if self.q_mode == "baseline":
            return None
        mode = "annealed" if self.q_mode == "annealed" else "fixed"
        gamma = self.gamma if self.q_mode == "annealed" else 0.0
        return QSampleConfig(self.lambda0, gamma, self.phi, mode)

    def network_spec(self) -> NetworkSpec:
        return PRESETS[self.preset](
            kind=self.activation,
            q_mode=self.q_mode,
            sample_cfg=self.sample_cfg(),
            dropout=self.dropout,
        )


@dataclass
class MetricsRecord:
    run_index: int
    epoch: int
    train_cross_entropy: float
    test_accuracy: float
    lambda_now: float
    lr_now: float
    wall_seconds: float


METRICS_FIELDS = (
    "run_index",
    "epoch",
    "train_cross_entropy",
    "test_accuracy",
    "lambda_now",
    "lr_now",
)
TIMING_FIELDS = ("run_index", "epoch", "wall_seconds")


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def emit_csv(records: Sequence, path, fields: Sequence[str]) -> None:
    """One header row, one row per record, reals with 9 significant digits."""
    lines = [",".join(fields)]
    for r in records:
        lines.append(",".join(_fmt(getattr(r, f)) for f in fields))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


@dataclass
class _AvgRow:
    epoch: int
    train_cross_entropy: float
    test_accuracy: float
    lambda_now: float
    lr_now: float


def average_records(records: Sequence[MetricsRecord]) -> List[_AvgRow]:
    """Mean curves across runs, keyed by epoch."""
    out = []
    epochs = sorted({r.epoch for r in records})
    for e in epochs:
        rows = [r for r in records if r.epoch == e]
        out.append(
            _AvgRow(
                epoch=e,
                train_cross_entropy=float(np.mean([r.train_cross_entropy for r in rows])),
                test_accuracy=float(np.mean([r.test_accuracy for r in rows])),
                lambda_now=rows[0].lambda_now,
                lr_now=rows[0].lr_now,
            )
        )
    return out


def _input_tensor(images: np.ndarray, preset: str) -> np.ndarray:
    if preset == "mnist_cnn":
        return images[..., None]
    return images


def _epoch_lambda(cfg: ExperimentConfig, epoch: int) -> Optional[float]:
    if cfg.q_mode == "baseline" or cfg.q_mode == "limit":
        return None
    return anneal_lambda(cfg.sample_cfg(), epoch)


def dataset_cross_entropy(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    lambda_now: Optional[float],
    rng: RngState,
    batch_size: int = 512,
) -> float:
    """Sample-average cross-entropy over a full dataset (evaluation pass:
    dropout off, batchnorm running stats; q still stochastic by default)."""
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        loss = network_loss(net, xb, yb, training=False, lambda_now=lambda_now, rng=rng)
        total += loss * xb.shape[0]
    return total / x.shape[0]


def dataset_accuracy(
    net: Network,
    x: np.ndarray,
    y: np.ndarray,
    lambda_now: Optional[float],
    rng: RngState,
    samples: int = 1,
    batch_size: int = 512,
) -> float:
    """Fraction correct; with samples > 1, class probabilities are averaged
    over that many stochastic evaluation passes."""
    correct = 0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        probs = np.zeros((xb.shape[0], net.output_shape[0]), dtype=np.float64)
        for _ in range(samples):
            probs += net.forward(xb, training=False, lambda_now=lambda_now, rng=rng)
        correct += int((probs.argmax(axis=1) == yb).sum())
    return correct / x.shape[0]


def train_single_run(
    spec: NetworkSpec,
    train_x: np.ndarray,
    train_y: np.ndarray,
    train_cfg: TrainConfig,
    run_index: int,
    epoch_lambda,
    epoch_callback=None,
    dtype=np.float32,
) -> Tuple[Network, RngState, float]:
    """Train one seeded run; ``epoch_lambda(T)`` supplies the noise scale
    and ``epoch_callback(epoch, net, rng, lambda_now, lr_now)`` records
    metrics after each epoch.  Returns (net, rng, final lr)."""
    rng = RngState.for_run(train_cfg.seed, run_index)
    net = Network(spec, rng, dtype=dtype)
    lr = train_cfg.lr0
    for epoch in range(1, train_cfg.epochs + 1):
        lam = epoch_lambda(epoch)
        for k, (xb, yb) in enumerate(
            iterate_minibatches(train_x, train_y, train_cfg.batch_size, rng)
        ):
            loss, grads = loss_and_grad(net, xb, yb, training=True, lambda_now=lam, rng=rng)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {k}")
            sgd_step(net, grads, lr)
            lr *= train_cfg.lr_decay_per_batch
        if epoch_callback is not None:
            epoch_callback(epoch, net, rng, lam, lr)
    return net, rng, lr


def run_experiment(
    cfg: ExperimentConfig,
    train_ds: Optional[Dataset] = None,
    test_ds: Optional[Dataset] = None,
) -> List[MetricsRecord]:
    """Run cfg.train.runs seeded runs and return per-epoch records.

    Datasets may be passed directly (tests) or loaded from cfg.data_dir.
    When cfg.out_dir is set, metrics.csv, metrics_avg.csv, timings.csv and
    run_info.json are written there.
    """
    if train_ds is None or test_ds is None:
        if cfg.data_dir is None:
            raise InvalidConfig("either datasets or data_dir must be provided")
        train_ds, test_ds = load_mnist_dir(cfg.data_dir)

    prep_rng = RngState(cfg.train.seed)
    if cfg.subset_train is not None and cfg.subset_train < len(train_ds):
        train_ds = subset(train_ds, cfg.subset_train, prep_rng)
    if cfg.subset_test is not None and cfg.subset_test < len(test_ds):
        test_ds = subset(test_ds, cfg.subset_test, prep_rng)

    spec = cfg.network_spec()
    train_x = _input_tensor(train_ds.images, cfg.preset)
    test_x = _input_tensor(test_ds.images, cfg.preset)

    records: List[MetricsRecord] = []
    for run_index in range(cfg.train.runs):
        run_t0 = time.perf_counter()

        def record_epoch(epoch, net, rng, lam, lr_now):
            # fresh normalization statistics before measuring; the derived
            # seed keeps the calibration pass off the run's own stream
            recalibrate_batchnorm(
                net, train_x, lam, RngState(cfg.train.seed + 1000003 * epoch)
            )
            train_ce = dataset_cross_entropy(net, train_x, train_ds.labels, lam, rng)
            test_acc = dataset_accuracy(
                net, test_x, test_ds.labels, lam, rng, samples=cfg.eval_samples
            )
            records.append(
                MetricsRecord(
                    run_index=run_index,
                    epoch=epoch,
                    train_cross_entropy=train_ce,
                    test_accuracy=test_acc,
                    lambda_now=0.0 if lam is None else lam,
                    lr_now=lr_now,
                    wall_seconds=time.perf_counter() - run_t0,
                )
            )

        train_single_run(
            spec,
            train_x,
            train_ds.labels,
            cfg.train,
            run_index,
            epoch_lambda=lambda T: _epoch_lambda(cfg, T),
            epoch_callback=record_epoch,
        )

    if cfg.out_dir is not None:
        write_outputs(cfg, records)
    return records


def write_outputs(cfg: ExperimentConfig, records: Sequence[MetricsRecord]) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    emit_csv(records, os.path.join(cfg.out_dir, "metrics.csv"), METRICS_FIELDS)
    emit_csv(
        average_records(records), os.path.join(cfg.out_dir, "metrics_avg.csv"),
        ("epoch", "train_cross_entropy", "test_accuracy", "lambda_now", "lr_now"),
    )
    emit_csv(records, os.path.join(cfg.out_dir, "timings.csv"), TIMING_FIELDS)
    info = {
        "preset": cfg.preset,
        "activation": {"tag": cfg.activation.tag, "alpha": cfg.activation.alpha},
        "q_mode": cfg.q_mode,
        "lambda0": cfg.lambda0,
        "gamma": cfg.gamma,
        "phi": cfg.phi,
        "dropout": cfg.dropout,
        "epochs": cfg.train.epochs,
        "batch_size": cfg.train.batch_size,
        "lr0": cfg.train.lr0,
        "lr_decay_per_batch": cfg.train.lr_decay_per_batch,
        "seed": cfg.train.seed,
        "runs": cfg.train.runs,
        "subset_train": cfg.subset_train,
        "subset_test": cfg.subset_test,
        "eval_samples": cfg.eval_samples,
        "evaluation": "stochastic q at test time"
        if cfg.q_mode in ("fixed", "annealed")
        else cfg.q_mode,
        "numpy": np.__version__,
        "threads_env": {
            k: os.environ.get(k)
            for k in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
            if os.environ.get(k)
        },
    }
    with open(os.path.join(cfg.out_dir, "run_info.json"), "w") as f:
        json.dump(info, f, indent=2, sort_keys=True)
        f.write("\n")


def load_mnist_dir(data_dir) -> Tuple[Dataset, Dataset]:
    """Load the four conventional MNIST IDX files (optionally gzipped)."""

    def find(name):
        for cand in (name, name + ".gz"):
            p = os.path.join(data_dir, cand)
            if os.path.exists(p):
                return p
        raise InvalidConfig(f"missing {name}[.gz] under {data_dir}")

    train = load_idx(find(MNIST_NAMES["train"][0]), find(MNIST_NAMES["train"][1]), "train")
    test = load_idx(find(MNIST_NAMES["test"][0]), find(MNIST_NAMES["test"][1]), "test")
    return train, test
