from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError


@dataclass(frozen=True)
class EnvSpec:
    observation_dim: int
    action_count: int
    max_episode_steps: int | None = None
    reward_range: tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        if self.observation_dim < 1 or self.action_count < 1:
            raise UsageError(f"environment dimensions must be positive: {self}")


@dataclass
class StepResult:
    """Outcome of one environment step.

    ``terminal`` is true whenever the episode is over; ``truncated`` marks
    the subset of those endings caused by a time limit rather than the task.
    ``raw_reward`` is the reward before any wrapper rescaled it.
    """

    obs: np.ndarray
    reward: float
    terminal: bool
    truncated: bool = False
    raw_reward: float | None = None

    def __post_init__(self):
        if self.raw_reward is None:
            self.raw_reward = self.reward


class Env:
    """Episodic environment interface shared by built-ins, wrappers and the bridge."""

    spec: EnvSpec

    def __init__(self):
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._done = False
        return self._reset(seed)

    def step(self, action: int) -> StepResult:
        if self._done:
            raise UsageError("step() called on a finished episode; call reset() first")
        action = int(action)
        if not 0 <= action < self.spec.action_count:
            raise UsageError(f"action {action} outside [0, {self.spec.action_count})")
        result = self._step(action)
        self._done = result.terminal
        return result

    def close(self) -> None:
        pass

    def _reset(self, seed):
        raise NotImplementedError

    def _step(self, action):
        raise NotImplementedError


def one_hot(index: int, size: int) -> np.ndarray:
    x = np.zeros(size)
    x[index] = 1.0
    return x
