"""Per-transition update rules on flat, index-aligned parameter vectors.

States are mutated in place and also returned, so both
``adam_step(state, w, g, eta)`` and ``state, w = adam_step(...)`` work.
Every step records the applied weight increment in ``state.last_update``
for logging; that buffer is preallocated so memory stays constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericFault


def _require_finite(name: str, x) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericFault(f"non-finite {name}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta0: float = 0.999
    beta1: float = 0.999
    epsilon: float = 0.01
    bias_correction: bool = False
    last_update: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.beta0 < 1.0 and 0.0 <= self.beta1 < 1.0):
            raise ConfigurationError(f"betas must lie in [0, 1): {self.beta0}, {self.beta1}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"Adam epsilon must be positive, got {self.epsilon}")
        if self.last_update is None:
            self.last_update = np.zeros_like(self.m)

    @classmethod
    def zeros(cls, n: int, **kwargs) -> AdamState:
        return cls(np.zeros(n), np.zeros(n), **kwargs)


def adam_step(state: AdamState, weights: np.ndarray, grad: np.ndarray, eta: float):
    """One Adam descent step, epsilon outside the square root.

    Without bias correction this is exactly
    ``m <- b0 m + (1-b0) g; v <- b1 v + (1-b1) g^2; w <- w - eta m / (sqrt(v) + eps)``.
    Raises NumericFault before touching anything if ``grad`` is not finite.
    """
    _require_finite("gradient", grad)
    if not eta >= 0:
        raise ConfigurationError(f"step size must be non-negative, got {eta}")
    state.m *= state.beta0
    state.m += (1.0 - state.beta0) * grad
    state.v *= state.beta1
    state.v += (1.0 - state.beta1) * np.square(grad)
    state.step_count += 1
    m, v = state.m, state.v
    if state.bias_correction:
        m = m / (1.0 - state.beta0**state.step_count)
        v = v / (1.0 - state.beta1**state.step_count)
    np.divide(m, np.sqrt(v) + state.epsilon, out=state.last_update)
    state.last_update *= -eta
    weights += state.last_update
    return state, weights


@dataclass
class TraceState:
    """Accumulating eligibility trace; ``v`` is only kept for Adaptive Q(lambda).

    ``decay`` is the product gamma * lambda.
    """

    z: np.ndarray
    decay: float
    v: np.ndarray | None = None
    last_update: np.ndarray = field(default=None, repr=False)
    last_step_size: float = 0.0
    last_certificate: float = 0.0
    last_clipped_delta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigurationError(f"trace decay must lie in [0, 1], got {self.decay}")
        if self.last_update is None:
            self.last_update = np.zeros_like(self.z)

    @classmethod
    def zeros(cls, n: int, decay: float, adaptive: bool = False) -> TraceState:
        return cls(np.zeros(n), decay, np.zeros(n) if adaptive else None)


def trace_accumulate(state: TraceState, grad_q: np.ndarray) -> TraceState:
    """``z <- decay z + g`` (and ``v <- decay v + (1 - decay) g^2`` when adaptive)."""
    _require_finite("value gradient", grad_q)
    state.z *= state.decay
    state.z += grad_q
    if state.v is not None:
        state.v *= state.decay
        state.v += (1.0 - state.decay) * np.square(grad_q)
    return state


def q_lambda_step(state: TraceState, weights: np.ndarray, delta: float, eta: float):
    _require_finite("TD error", delta)
    np.multiply(state.z, eta * delta, out=state.last_update)
    weights += state.last_update
    state.last_step_size = eta
    return state, weights


def aq_lambda_step(state: TraceState, weights: np.ndarray, delta: float, eta: float, epsilon: float = 0.1):
    """Adaptive Q(lambda): trace scaled by ``1 / (sqrt(v) + eps)``, TD error clamped to [-1, 1]."""
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    if state.v is None:
        raise ConfigurationError("Adaptive Q(lambda) needs a trace state with a second-moment vector")
    _require_finite("TD error", delta)
    clipped = min(max(delta, -1.0), 1.0)
    np.divide(state.z, np.sqrt(state.v) + epsilon, out=state.last_update)
    state.last_update *= eta * clipped
    weights += state.last_update
    state.last_clipped_delta = clipped
    state.last_step_size = eta
    return state, weights


def obgd_step(state: TraceState, weights: np.ndarray, delta: float, eta: float = 1.0, kappa: float = 2.0):
    """Overshooting-bounded step along the trace.

    The step size is shrunk to ``1 / (kappa * max(|delta|, 1) * ||z||_1)``
    whenever ``eta`` exceeds it, so ``step * kappa * max(|delta|, 1) * ||z||_1 <= 1``
    always holds; the final ``nextafter`` loop enforces that bound against
    rounding.
    """
    if not kappa > 0:
        raise ConfigurationError(f"kappa must be positive, got {kappa}")
    _require_finite("TD error", delta)
    dbar = max(abs(delta), 1.0)
    l1 = float(np.abs(state.z).sum())
    bound = kappa * dbar * l1

    def over(s):
        # check both association orders so the bound survives however it is recomputed
        return s * bound > 1.0 or s * kappa * dbar * l1 > 1.0

    step = eta
    if over(eta):
        step = 1.0 / bound
        while over(step):
            step = math.nextafter(step, 0.0)
    np.multiply(state.z, step * delta, out=state.last_update)
    weights += state.last_update
    state.last_step_size = step
    state.last_certificate = step * bound
    return state, weights


def reset_trace(state: TraceState, reset_v: bool = False) -> TraceState:
    state.z.fill(0.0)
    if reset_v and state.v is not None:
        state.v.fill(0.0)
    return state


def sgdm_step(momentum: np.ndarray, weights: np.ndarray, grad: np.ndarray, eta: float, mu: float):
    """Heavy-ball SGD: ``m <- mu m + g; w <- w - eta m``."""
    if not 0.0 <= mu < 1.0:
        raise ConfigurationError(f"momentum must lie in [0, 1), got {mu}")
    _require_finite("gradient", grad)
    momentum *= mu
    momentum += grad
    weights -= eta * momentum
    return momentum, weights
