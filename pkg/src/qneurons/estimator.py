"""scikit-learn compatible classifier wrapping the training engine.

The estimator trains the two-hidden-block MLP on flat feature vectors,
so it composes with pipelines, grid search, and cross-validation.  With
a stochastic q mode, prediction re-seeds its own evaluation stream from
``random_state`` on every call, so repeated ``predict`` calls on the
same input agree with each other.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .activations import ActivationKind
from .data import iterate_minibatches
from .errors import NonFiniteLoss
from .network import Network, loss_and_grad, mlp_spec, recalibrate_batchnorm, sgd_step
from .sampling import QSampleConfig, RngState, anneal_lambda

_PREDICT_STREAM_OFFSET = 0x5EED


class QNeuronClassifier(ClassifierMixin, BaseEstimator):
    """Multi-layer perceptron with stochastic q-activations.

    Parameters
    ----------
    hidden_units : width of the two hidden blocks.
    activation : one of sigmoid, tanh, relu, softplus, elu.
    q_mode : "baseline" (plain activation), "fixed" (constant noise
        scale), "annealed" (noise scale decaying per epoch), or "limit"
        (deterministic small-noise limit f'(x)*x).
    lambda0, gamma, phi : noise scale, decay rate, and zero-avoidance
        floor of the q draw.
    eval_samples : stochastic evaluation passes averaged per prediction.
    """

    def __init__(
        self,
        hidden_units: int = 256,
        activation: str = "tanh",
        q_mode: str = "fixed",
        lambda0: float = 0.02,
        gamma: float = 0.5,
        phi: float = 1e-3,
        alpha: float = 1.0,
        dropout: float = 0.0,
        epochs: int = 5,
        batch_size: int = 64,
        learning_rate: float = 0.05,
        lr_decay_per_batch: float = 1.0 - 1e-6,
        eval_samples: int = 1,
        random_state: int = 0,
    ):
        self.hidden_units = hidden_units
        self.activation = activation
        self.q_mode = q_mode
        self.lambda0 = lambda0
        self.gamma = gamma
        self.phi = phi
        self.alpha = alpha
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay_per_batch = lr_decay_per_batch
        self.eval_samples = eval_samples
        self.random_state = random_state

    def _sample_cfg(self):
        if self.q_mode == "baseline":
            return None
        mode = "annealed" if self.q_mode == "annealed" else "fixed"
        gamma = self.gamma if self.q_mode == "annealed" else 0.0
        return QSampleConfig(self.lambda0, gamma, self.phi, mode)

    def _epoch_lambda(self, epoch: int):
        if self.q_mode in ("baseline", "limit"):
            return None
        return anneal_lambda(self._sample_cfg(), epoch)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        X = np.asarray(X, dtype=np.float32)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]

        kind = ActivationKind(self.activation, self.alpha)
        spec = mlp_spec(
            input_shape=(X.shape[1],),
            hidden=self.hidden_units,
            classes=len(self.classes_),
            kind=kind,
            q_mode=self.q_mode,
            sample_cfg=self._sample_cfg(),
            dropout=self.dropout > 0.0,
            dropout_rate=self.dropout,
        )
        rng = RngState(self.random_state)
        net = Network(spec, rng)
        lr = self.learning_rate
        for epoch in range(1, self.epochs + 1):
            lam = self._epoch_lambda(epoch)
            for xb, yb in iterate_minibatches(X, y_idx, self.batch_size, rng):
                loss, grads = loss_and_grad(net, xb, yb, training=True, lambda_now=lam, rng=rng)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"non-finite loss at epoch {epoch}")
                sgd_step(net, grads, lr)
                lr *= self.lr_decay_per_batch
        self.network_ = net
        self.final_lambda_ = self._epoch_lambda(max(1, self.epochs))
        recalibrate_batchnorm(
            net, X, self.final_lambda_, RngState(self.random_state + _PREDICT_STREAM_OFFSET)
        )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X)
        X = np.asarray(X, dtype=np.float32)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        rng = RngState(self.random_state + _PREDICT_STREAM_OFFSET)
        probs = np.zeros((X.shape[0], len(self.classes_)), dtype=np.float64)
        for _ in range(self.eval_samples):
            probs += self.network_.forward(
                X, training=False, lambda_now=self.final_lambda_, rng=rng
            )
        return probs / self.eval_samples

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[probs.argmax(axis=1)]
