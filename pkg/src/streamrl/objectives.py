"""Losses and their gradients with respect to network outputs.

All targets are treated as constants (semi-gradient convention). Gradients
are taken w.r.t. the prediction / logits / quantile estimates, i.e. they are
the ``output_grad`` to hand to :func:`streamrl.approximator.backward`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class LossGrad:
    loss: float
    grad: np.ndarray | float


@dataclass(frozen=True)
class CategoricalDistribution:
    """Probability masses on a fixed, uniformly spaced atom grid."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if atoms.ndim != 1 or atoms.size < 2 or atoms.shape != probs.shape:
            raise UsageError("atoms and probs must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(atoms) <= 0):
            raise UsageError("atoms must be strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise UsageError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def v_min(self) -> float:
        return float(self.atoms[0])

    @property
    def v_max(self) -> float:
        return float(self.atoms[-1])

    @property
    def delta_z(self) -> float:
        return (self.v_max - self.v_min) / (self.atoms.size - 1)

    def mean(self) -> float:
        return float(self.probs @ self.atoms)


def atom_grid(v_min: float = -10.0, v_max: float = 10.0, n_atoms: int = 200) -> np.ndarray:
    if n_atoms < 2 or not v_max > v_min:
        raise ConfigurationError(f"bad atom grid ({v_min}, {v_max}, {n_atoms})")
    return np.linspace(v_min, v_max, n_atoms)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _check_kappa(kappa: float) -> None:
    if not kappa > 0:
        raise ConfigurationError(f"kappa must be positive, got {kappa}")


def mse(prediction: float, target: float) -> LossGrad:
    delta = target - prediction
    return LossGrad(delta * delta, -2.0 * delta)


def smooth_l1(prediction: float, target: float, kappa: float = 1.0) -> LossGrad:
    """Huber-style loss: quadratic inside ``|delta| < kappa``, linear outside."""
    _check_kappa(kappa)
    delta = target - prediction
    if abs(delta) < kappa:
        return LossGrad(0.5 * delta * delta / kappa, -delta / kappa)
    return LossGrad(abs(delta) - 0.5 * kappa, -math.copysign(1.0, delta))


def td_error_control(q_now: float, q_next_max: float, reward: float, discount: float, terminal: bool) -> float:
    bootstrap = 0.0 if terminal else discount * q_next_max
    return reward + bootstrap - q_now


def c51_project(
    source: CategoricalDistribution, reward: float, discount: float, terminal: bool
) -> CategoricalDistribution:
    """Project ``reward + discount * Z`` back onto the atom grid of ``source``.

    Each shifted atom is clipped to ``[v_min, v_max]`` and its mass split
    linearly between the two neighbouring grid atoms.
    """
    atoms = source.atoms
    k = atoms.size
    dz = source.delta_z
    shifted = reward + (0.0 if terminal else discount) * atoms
    shifted = np.clip(shifted, source.v_min, source.v_max)
    b = np.clip((shifted - source.v_min) / dz, 0.0, k - 1)
    # snap rounding noise so on-grid atoms map to themselves exactly
    nearest = np.rint(b)
    b = np.where(np.abs(b - nearest) < 1e-9, nearest, b)
    lower = np.floor(b).astype(np.int64)
    upper = np.minimum(lower + 1, k - 1)
    frac_upper = b - lower
    out = np.bincount(lower, source.probs * (1.0 - frac_upper), minlength=k)
    out += np.bincount(upper, source.probs * frac_upper, minlength=k)
    return CategoricalDistribution(atoms, out)


def c51_cross_entropy(logits: np.ndarray, target: CategoricalDistribution) -> LossGrad:
    """Cross-entropy between a fixed target and ``softmax(logits)``; grad is ``softmax - target``."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != target.probs.shape:
        raise UsageError(f"logits shape {logits.shape} != target shape {target.probs.shape}")
    # shift by the max so probabilities come from exp of values <= 0
    z = logits - logits.max()
    e = np.exp(z)
    total = e.sum()
    loss = float(-(target.probs @ (z - math.log(total))))
    return LossGrad(loss, e / total - target.probs)


def quantile_midpoints(n: int) -> np.ndarray:
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def quantile_huber(estimates, targets, kappa: float = 1.0) -> LossGrad:
    """QR-DQN quantile Huber loss.

    Pairs every estimate ``theta_i`` with every target sample ``T_j``; the
    loss sums over quantiles and averages over target samples:
    ``sum_i mean_j |tau_i - 1{u_ij < 0}| * Huber_kappa(u_ij) / kappa`` with
    ``u_ij = T_j - theta_i`` and midpoint quantiles ``tau_i = (2i - 1) / 2N``.
    Each gradient component is an average of terms bounded by 1.
    """
    _check_kappa(kappa)
    theta = np.asarray(estimates, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if theta.size < 1 or t.size < 1:
        raise UsageError("need at least one estimate and one target sample")
    tau = quantile_midpoints(theta.size)[:, None]
    u = t[None, :] - theta[:, None]
    abs_u = np.abs(u)
    huber = np.where(abs_u <= kappa, 0.5 * u * u, kappa * (abs_u - 0.5 * kappa))
    weight = np.abs(tau - (u < 0))
    loss = float((weight * huber / kappa).mean(axis=1).sum())
    # d/d theta_i of Huber(u)/kappa is -clip(u / kappa, -1, 1)
    grad = -(weight * np.clip(u / kappa, -1.0, 1.0)).mean(axis=1)
    return LossGrad(loss, grad)
