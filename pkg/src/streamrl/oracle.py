"""Brute-force ground truth for tests: tabular value iteration and forward-view returns.

Deliberately naive (dense tables, full sweeps, explicit loops) and
independent of :mod:`streamrl.optim` and :mod:`streamrl.agents`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError


class NonConvergenceError(ConfigurationError):
    pass


@dataclass
class TabularMDP:
    """``P[s, a, s']`` transition kernel, ``R[s, a]`` expected reward.

    States flagged in ``terminal`` have value zero and are never backed up.
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float
    terminal: np.ndarray = field(default=None)

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        n_s, n_a = self.R.shape
        if self.P.shape != (n_s, n_a, n_s):
            raise ConfigurationError(f"P shape {self.P.shape} inconsistent with R shape {self.R.shape}")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > 1e-12:
            raise ConfigurationError("every P[s, a] row must be a distribution")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.terminal is None:
            self.terminal = np.zeros(n_s, dtype=bool)
        self.terminal = np.asarray(self.terminal, dtype=bool)

    @property
    def n_states(self) -> int:
        return self.R.shape[0]

    @property
    def n_actions(self) -> int:
        return self.R.shape[1]


def bellman_backup(mdp: TabularMDP, q: np.ndarray) -> np.ndarray:
    out = np.zeros_like(q)
    for s in range(mdp.n_states):
        if mdp.terminal[s]:
            continue
        for a in range(mdp.n_actions):
            total = mdp.R[s, a]
            for s2 in range(mdp.n_states):
                p = mdp.P[s, a, s2]
                if p and not mdp.terminal[s2]:
                    total += mdp.gamma * p * max(q[s2])
            out[s, a] = total
    return out


def greedy_policy(q: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximiser, i.e. the lowest action index
    return np.array([int(np.argmax(row)) for row in q])


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_sweeps: int = 100_000):
    """Returns ``(q_star, policy)`` with sup-norm Bellman residual below ``tol``."""
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_sweeps):
        new = bellman_backup(mdp, q)
        residual = np.max(np.abs(new - q)) if q.size else 0.0
        q = new
        if residual < tol:
            if np.max(np.abs(bellman_backup(mdp, q) - q)) < tol:
                return q, greedy_policy(q)
    raise NonConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps")


def optimal_action_sets(q_star: np.ndarray, tol: float = 1e-9) -> list[set[int]]:
    """All actions within ``tol`` of the best action, per state."""
    return [set(np.flatnonzero(row >= row.max() - tol).tolist()) for row in q_star]


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    total = 0.0
    for k, r in enumerate(rewards):
        total += gamma**k * r
    return total


@dataclass
class Trajectory:
    """One recorded episode: ``states[t]`` is S_t, ``rewards[t]`` is R_{t+1}.

    ``len(states) == len(rewards) + 1``; the last state is terminal (value 0)
    when ``terminated`` is true.
    """

    states: list
    rewards: list[float]
    terminated: bool = True

    @property
    def length(self) -> int:
        return len(self.rewards)


def _value(traj: Trajectory, idx: int, value_fn: Callable) -> float:
    if idx == traj.length and traj.terminated:
        return 0.0
    return value_fn(traj.states[idx])


def n_step_return(traj: Trajectory, t: int, n: int, value_fn: Callable, gamma: float) -> float:
    """``G_{t:t+n}``; equals the Monte-Carlo return once ``t + n`` reaches the episode end."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    end = min(t + n, traj.length)
    total = 0.0
    for k in range(t, end):
        total += gamma ** (k - t) * traj.rewards[k]
    if t + n < traj.length or not traj.terminated:
        total += gamma ** (end - t) * _value(traj, end, value_fn)
    return total


def lambda_return_weights(t: int, horizon: int, lam: float) -> list[float]:
    """Weights of ``G_{t:t+1}, ..., G_{t:T-1}`` followed by the Monte-Carlo tail weight."""
    remaining = horizon - t
    weights = [(1.0 - lam) * lam ** (n - 1) for n in range(1, remaining)]
    weights.append(lam ** (remaining - 1))
    return weights


def lambda_return(traj: Trajectory, t: int, lam: float, value_fn: Callable, gamma: float) -> float:
    """Episodic lambda-return by direct enumeration of every n-step return."""
    if not traj.terminated:
        raise ConfigurationError("lambda_return is defined for terminated episodes only")
    horizon = traj.length
    weights = lambda_return_weights(t, horizon, lam)
    total = 0.0
    for n, wgt in enumerate(weights[:-1], start=1):
        total += wgt * n_step_return(traj, t, n, value_fn, gamma)
    total += weights[-1] * discounted_return(traj.rewards[t:], gamma)
    return total
