"""Zero-avoiding stochastic draw of the activation parameter q and its
noise-scale annealing schedule.

A draw takes one standard normal eps and maps it to

    q = 1 + (2*[eps >= 0] - 1) * (lam * |eps| + phi)

so |q - 1| >= phi always holds and the 1/(1 - q) quotient downstream can
never blow up.  eps = 0 lands on the positive branch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig

DEFAULT_PHI = 1e-3


@dataclass
class QSampleConfig:
    """Noise parameters: initial scale, decay rate, floor, and whether the
    scale stays fixed or is annealed across epochs."""

    lambda0: float
    gamma: float = 0.0
    phi: float = DEFAULT_PHI
    mode: str = "fixed"

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise InvalidConfig(f"lambda0 must be > 0, got {self.lambda0}")
        if self.gamma < 0:
            raise InvalidConfig(f"gamma must be >= 0, got {self.gamma}")
        if not self.phi > 0:
            raise InvalidConfig(f"phi must be > 0, got {self.phi}")
        if self.mode not in ("fixed", "annealed"):
            raise InvalidConfig(f"mode must be 'fixed' or 'annealed', got {self.mode!r}")


class RngState:
    """Deterministic random source: a PCG64 stream behind numpy's Generator.

    Identical seeds give identical sequences across runs and platforms;
    no OS entropy is involved.  A state is single-owner: never sample from
    the same instance on two threads.  Parallel runs derive independent
    states with :meth:`for_run` (seed = base_seed + run_index).
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def for_run(cls, base_seed: int, run_index: int) -> "RngState":
        return cls(int(base_seed) + int(run_index))

    def standard_normal(self, shape=None):
        if shape is None:
            return float(self._gen.standard_normal())
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape=None):
        return self._gen.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self):
        return f"RngState(seed={self.seed})"


def _check_sample_args(lam: float, phi: float):
    if not lam > 0:
        raise InvalidConfig(f"lambda must be > 0, got {lam}")
    if not phi > 0:
        raise InvalidConfig(f"phi must be > 0, got {phi}")


def sample_q(lam: float, phi: float, rng: RngState) -> float:
    """Draw one q; |q - 1| >= phi is guaranteed."""
    _check_sample_args(lam, phi)
    eps = rng.standard_normal()
    sign = 1.0 if eps >= 0 else -1.0
    return 1.0 + sign * (lam * abs(eps) + phi)


def sample_q_tensor(lam: float, phi: float, shape, rng: RngState) -> np.ndarray:
    """Independent elementwise q draws, one per activation element."""
    _check_sample_args(lam, phi)
    eps = rng.standard_normal(tuple(shape))
    sign = np.where(eps >= 0, 1.0, -1.0)
    return 1.0 + sign * (lam * np.abs(eps) + phi)


def anneal_lambda(cfg: QSampleConfig, epoch: int) -> float:
    """Noise scale at 1-based epoch T: lambda0 in fixed mode, otherwise
    lambda0 / (1 + gamma (T - 1)); nonincreasing in T."""
    if epoch < 1:
        raise InvalidConfig(f"epoch index must be >= 1, got {epoch}")
    if cfg.mode == "fixed":
        return cfg.lambda0
    return cfg.lambda0 / (1.0 + cfg.gamma * (epoch - 1))
