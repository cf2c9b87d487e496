"""Stochastic q-activation: g_q(x) = (f(x) - f(qx)) / (1 - q).

For q near 1 this approaches f'(x)*x, so its gradient carries
second-order information about the base activation f.  The layer draws
one q per element per forward pass and reuses exactly that draw in the
backward pass (q is a constant of the realized graph).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .activations import ActivationKind, act_deriv, act_eval, limit_form, limit_form_grad
from .errors import DegenerateQ, InvalidConfig, ShapeMismatch, StaleState
from .sampling import DEFAULT_PHI, QSampleConfig, RngState, sample_q_tensor

EVAL_MODES = ("stochastic", "limit")


def _check_q(q):
    if np.any(np.asarray(q) == 1.0):
        raise DegenerateQ("q = 1 makes the 1/(1-q) quotient undefined")


def q_act(kind: ActivationKind, x, q):
    """(f(x) - f(qx)) / (1 - q), elementwise; equals 0 at x = 0 for any q."""
    _check_q(q)
    q = np.asarray(q)
    return (act_eval(kind, x) - act_eval(kind, np.multiply(q, x))) / (1.0 - q)


def q_act_grad(kind: ActivationKind, x, q):
    """d/dx of :func:`q_act` at fixed q: (f'(x) - q f'(qx)) / (1 - q)."""
    _check_q(q)
    q = np.asarray(q)
    return (act_deriv(kind, x, 1) - q * act_deriv(kind, np.multiply(q, x), 1)) / (1.0 - q)


class QActivationLayer:
    """Elementwise stochastic activation with a cached draw for backward.

    ``eval_mode="stochastic"`` draws a fresh q tensor on every forward
    (training or not); ``eval_mode="limit"`` never samples and computes
    the deterministic form f'(x)*x instead.
    """

    def __init__(
        self,
        kind: ActivationKind,
        sample_cfg: Optional[QSampleConfig] = None,
        eval_mode: str = "stochastic",
    ):
        if eval_mode not in EVAL_MODES:
            raise InvalidConfig(f"eval_mode must be one of {EVAL_MODES}, got {eval_mode!r}")
        self.kind = kind
        self.sample_cfg = sample_cfg
        self.eval_mode = eval_mode
        self.last_q: Optional[np.ndarray] = None
        self.last_input: Optional[np.ndarray] = None

    @property
    def phi(self) -> float:
        return self.sample_cfg.phi if self.sample_cfg is not None else DEFAULT_PHI

    def forward(
        self,
        x: np.ndarray,
        training: bool = True,
        lambda_now: Optional[float] = None,
        rng: Optional[RngState] = None,
        frozen: bool = False,
    ) -> np.ndarray:
        """Apply the activation; caches input (and the q draw) for backward.

        ``frozen=True`` reuses the previous draw instead of sampling, which
        is what finite-difference gradient checks need.
        """
        x = np.asarray(x)
        self.last_input = x
        if self.eval_mode == "limit":
            self.last_q = None
            return limit_form(self.kind, x)
        if frozen:
            if self.last_q is None:
                raise StaleState("frozen forward requested before any stochastic forward")
            if self.last_q.shape != x.shape:
                raise ShapeMismatch(
                    f"frozen q shape {self.last_q.shape} does not match input {x.shape}"
                )
        else:
            if lambda_now is None or not lambda_now > 0:
                raise InvalidConfig(f"stochastic forward needs lambda_now > 0, got {lambda_now}")
            if rng is None:
                raise InvalidConfig("stochastic forward needs an RngState")
            q = sample_q_tensor(lambda_now, self.phi, x.shape, rng)
            self.last_q = q.astype(x.dtype, copy=False) if x.dtype != q.dtype else q
        return q_act(self.kind, x, self.last_q)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """grad_out times the local derivative, using the cached q."""
        if self.last_input is None:
            raise StaleState("backward requested before any forward")
        grad_out = np.asarray(grad_out)
        if grad_out.shape != self.last_input.shape:
            raise ShapeMismatch(
                f"grad shape {grad_out.shape} does not match cached input {self.last_input.shape}"
            )
        if self.eval_mode == "limit":
            return grad_out * limit_form_grad(self.kind, self.last_input)
        if self.last_q is None:
            raise StaleState("backward requested before any stochastic forward")
        return grad_out * q_act_grad(self.kind, self.last_input, self.last_q)
