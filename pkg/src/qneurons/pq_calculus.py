"""Scalar and multivariate two-parameter finite-difference operators.

The central object is the quotient (f(px) - f(qx)) / ((p - q) x), a
derivative-like operator that needs no limits and applies even to
non-differentiable functions.  Where the quotient is undefined (x = 0,
or p = q) it falls back to the analytic derivative: f'(0) at x = 0 and
f'(px) when p = q, so the operator is total whenever f' is supplied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .activations import ScalarFn
from .errors import (
    DimensionMismatch,
    MissingDerivative,
    MissingPartial,
    NonFiniteResult,
)


@dataclass(frozen=True)
class PQPair:
    p: float
    q: float


PairLike = Union[PQPair, Sequence[float]]


def _unpack(pq: PairLike) -> tuple[float, float]:
    if isinstance(pq, PQPair):
        return float(pq.p), float(pq.q)
    p, q = pq
    return float(p), float(q)


def pq_derivative(f: ScalarFn, pq: PairLike, x: float) -> float:
    """Two-parameter difference quotient of ``f`` at ``x``.

    Quotient branch (x != 0 and p != q): (f(px) - f(qx)) / ((p - q) x).
    Fallback branches require ``f.deriv1``: returns f'(0) at x = 0 and
    f'(px) when p = q.
    """
    p, q = _unpack(pq)
    x = float(x)
    if x == 0.0 or p == q:
        if f.deriv1 is None:
            raise MissingDerivative(
                "fallback branch (x = 0 or p = q) needs an analytic first derivative"
            )
        return float(f.deriv1(0.0)) if x == 0.0 else float(f.deriv1(p * x))
    val = (float(f.eval(p * x)) - float(f.eval(q * x))) / ((p - q) * x)
    if not math.isfinite(val):
        raise NonFiniteResult(f"quotient is not finite at p={p}, q={q}, x={x}")
    return val


def q_derivative(f: ScalarFn, q: float, x: float) -> float:
    """One-parameter difference quotient; the p = 1 case of :func:`pq_derivative`."""
    return pq_derivative(f, PQPair(1.0, q), x)


def pq_gradient(
    F: Callable[[np.ndarray], float],
    p: Sequence[float],
    q: Sequence[float],
    x: Sequence[float],
    partials: Optional[Callable[[np.ndarray], Sequence[float]]] = None,
) -> np.ndarray:
    """Componentwise difference-quotient gradient of a multivariate ``F``.

    Component i scales only coordinate i:
    (F(..., p_i x_i, ...) - F(..., q_i x_i, ...)) / ((p_i - q_i) x_i).

    Coordinates with x_i = 0 (or p_i = q_i) fall back to the analytic
    partial derivative supplied via ``partials`` (a function returning the
    full gradient vector); for p_i = q_i the partial is taken at the point
    with x_i scaled by p_i, mirroring the scalar fallback.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not (p.shape == q.shape == x.shape) or p.ndim != 1:
        raise DimensionMismatch(
            f"p, q, x must be equal-length vectors, got shapes {p.shape}, {q.shape}, {x.shape}"
        )
    d = x.size
    out = np.empty(d, dtype=np.float64)
    for i in range(d):
        if x[i] == 0.0 or p[i] == q[i]:
            if partials is None:
                raise MissingPartial(
                    f"coordinate {i} (x_i = {x[i]}, p_i = {p[i]}, q_i = {q[i]}) "
                    "needs an analytic partial derivative"
                )
            xi = x.copy()
            if x[i] != 0.0:
                xi[i] = p[i] * x[i]
            out[i] = np.asarray(partials(xi), dtype=np.float64)[i]
        else:
            xp = x.copy()
            xp[i] = p[i] * x[i]
            xq = x.copy()
            xq[i] = q[i] * x[i]
            out[i] = (float(F(xp)) - float(F(xq))) / ((p[i] - q[i]) * x[i])
    if not np.all(np.isfinite(out)):
        raise NonFiniteResult("gradient quotient is not finite")
    return out


def bregman_divergence(f: ScalarFn, a: float, b: float) -> float:
    """f(a) - f(b) - (a - b) f'(b); nonnegative for convex f."""
    if f.deriv1 is None:
        raise MissingDerivative("Bregman divergence needs an analytic first derivative")
    a = float(a)
    b = float(b)
    return float(f.eval(a)) - float(f.eval(b)) - (a - b) * float(f.deriv1(b))
