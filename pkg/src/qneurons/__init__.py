"""Stochastic q-activation neural networks.

Activation functions built from two-point finite-difference quotients
with a randomly drawn scale parameter q, plus the numerical calculus
kernel behind them, a small reverse-mode training engine, and an
experiment harness.
"""

from .activations import (
    ActivationKind,
    ScalarFn,
    act_deriv,
    act_eval,
    limit_form,
    limit_form_grad,
    scalar_fn,
)
from .data import Dataset, batches, load_idx, read_idx, subset, write_idx
from .errors import (
    BadMagic,
    CountMismatch,
    DegenerateQ,
    DimensionMismatch,
    InvalidConfig,
    MissingDerivative,
    MissingPartial,
    NonFiniteLoss,
    NonFiniteResult,
    QNeuronError,
    ShapeMismatch,
    StaleState,
    TruncatedFile,
)
from .estimator import QNeuronClassifier
from .harness import (
    ExperimentConfig,
    MetricsRecord,
    TrainConfig,
    average_records,
    emit_csv,
    run_experiment,
)
from .network import (
    Network,
    NetworkSpec,
    load_checkpoint,
    loss_and_grad,
    mlp_spec,
    mnist_cnn,
    mnist_mlp,
    network_loss,
    recalibrate_batchnorm,
    save_checkpoint,
    sgd_step,
)
from .pq_calculus import PQPair, bregman_divergence, pq_derivative, pq_gradient, q_derivative
from .qactivation import QActivationLayer, q_act, q_act_grad
from .sampling import QSampleConfig, RngState, anneal_lambda, sample_q, sample_q_tensor

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "ScalarFn",
    "act_eval",
    "act_deriv",
    "limit_form",
    "limit_form_grad",
    "scalar_fn",
    "PQPair",
    "pq_derivative",
    "q_derivative",
    "pq_gradient",
    "bregman_divergence",
    "QSampleConfig",
    "RngState",
    "sample_q",
    "sample_q_tensor",
    "anneal_lambda",
    "q_act",
    "q_act_grad",
    "QActivationLayer",
    "Network",
    "NetworkSpec",
    "mlp_spec",
    "mnist_mlp",
    "mnist_cnn",
    "loss_and_grad",
    "network_loss",
    "recalibrate_batchnorm",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
    "Dataset",
    "load_idx",
    "read_idx",
    "write_idx",
    "subset",
    "batches",
    "ExperimentConfig",
    "TrainConfig",
    "MetricsRecord",
    "run_experiment",
    "emit_csv",
    "average_records",
    "QNeuronClassifier",
    "QNeuronError",
    "MissingDerivative",
    "MissingPartial",
    "NonFiniteResult",
    "DimensionMismatch",
    "InvalidConfig",
    "DegenerateQ",
    "StaleState",
    "ShapeMismatch",
    "BadMagic",
    "TruncatedFile",
    "CountMismatch",
    "NonFiniteLoss",
]
