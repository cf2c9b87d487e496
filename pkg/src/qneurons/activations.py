"""The five base activation functions with analytic first and second derivatives.

Every function here accepts a scalar or a numpy array and evaluates
elementwise.  Sigmoid and softplus use overflow-safe branches so the
engine can run them on arbitrarily large pre-activations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidConfig

VALID_TAGS = ("sigmoid", "tanh", "relu", "softplus", "elu")


@dataclass(frozen=True)
class ActivationKind:
    """One of the five supported activations; ``alpha`` only matters for elu."""

    tag: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.tag not in VALID_TAGS:
            raise InvalidConfig(f"unknown activation tag {self.tag!r}; expected one of {VALID_TAGS}")
        if self.tag == "elu" and not self.alpha > 0:
            raise InvalidConfig(f"elu alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class ScalarFn:
    """A real function with optional analytic derivatives, as consumed by the
    finite-difference operators in :mod:`qneurons.pq_calculus`."""

    eval: Callable
    deriv1: Optional[Callable] = None
    deriv2: Optional[Callable] = None


def _as_float(x):
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    return x


def _ret(out, x):
    # scalar in, scalar out
    return float(out) if np.ndim(x) == 0 else out


def _sigmoid(x):
    # exp(-|x|) never overflows; the two branches agree analytically
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def _softplus(x):
    # for x > 30 this is x + log1p(exp(-x)) up to rounding
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _elu_neg(x, alpha):
    # clamp before exp so np.where never sees an overflowed branch
    return alpha * np.expm1(np.minimum(x, 0.0))


def act_eval(kind: ActivationKind, x):
    """Evaluate the activation ``f(x)`` elementwise."""
    x = _as_float(x)
    t = kind.tag
    if t == "sigmoid":
        out = _sigmoid(x)
    elif t == "tanh":
        out = np.tanh(x)
    elif t == "relu":
        out = np.maximum(x, 0.0)
    elif t == "softplus":
        out = _softplus(x)
    else:  # elu
        out = np.where(x >= 0, x, _elu_neg(x, kind.alpha))
    return _ret(out, x)


def act_deriv(kind: ActivationKind, x, order: int = 1):
    """Analytic first or second derivative of the activation.

    relu' at exactly 0 is 0 (subgradient choice); elu' at exactly 0 is 1,
    the value of its x >= 0 branch.
    """
    if order not in (1, 2):
        raise InvalidConfig(f"derivative order must be 1 or 2, got {order}")
    x = _as_float(x)
    t = kind.tag
    if t == "sigmoid":
        s = _sigmoid(x)
        out = s * (1.0 - s) if order == 1 else s * (1.0 - s) * (1.0 - 2.0 * s)
    elif t == "tanh":
        th = np.tanh(x)
        sech2 = 1.0 - th * th
        out = sech2 if order == 1 else -2.0 * th * sech2
    elif t == "relu":
        out = np.where(x > 0, 1.0, 0.0) if order == 1 else np.zeros_like(x)
    elif t == "softplus":
        s = _sigmoid(x)
        out = s if order == 1 else s * (1.0 - s)
    else:  # elu
        e = kind.alpha * np.exp(np.minimum(x, 0.0))
        out = np.where(x >= 0, 1.0, e) if order == 1 else np.where(x >= 0, 0.0, e)
    return _ret(out, x)


def limit_form(kind: ActivationKind, x):
    """The deterministic function f'(x)*x that the stochastic activation
    collapses to as the noise scale vanishes."""
    x = _as_float(x)
    t = kind.tag
    if t == "sigmoid":
        s = _sigmoid(x)
        out = s * (1.0 - s) * x
    elif t == "tanh":
        th = np.tanh(x)
        out = (1.0 - th * th) * x
    elif t == "relu":
        out = np.maximum(x, 0.0)
    elif t == "softplus":
        out = _sigmoid(x) * x
    else:  # elu
        out = np.where(x >= 0, x, kind.alpha * np.exp(np.minimum(x, 0.0)) * x)
    return _ret(out, x)


def limit_form_grad(kind: ActivationKind, x):
    """Derivative of :func:`limit_form`: f'(x) + f''(x)*x."""
    return act_deriv(kind, x, 1) + act_deriv(kind, x, 2) * _as_float(x)


def scalar_fn(kind: ActivationKind) -> ScalarFn:
    """Package an activation as a ScalarFn with analytic derivatives."""
    return ScalarFn(
        eval=lambda x: act_eval(kind, x),
        deriv1=lambda x: act_deriv(kind, x, 1),
        deriv2=lambda x: act_deriv(kind, x, 2),
    )


SIGMOID = ActivationKind("sigmoid")
TANH = ActivationKind("tanh")
RELU = ActivationKind("relu")
SOFTPLUS = ActivationKind("softplus")
ELU = ActivationKind("elu")
