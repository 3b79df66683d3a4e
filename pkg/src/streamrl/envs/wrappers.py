"""Streaming observation/reward normalisation and time limits.

The canonical stack is ``NormalizeObservation(ScaleReward(TimeLimit(env)))``.
Normaliser statistics are global across episodes and only move while the
wrapper is in training mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from .base import Env, StepResult

NORM_EPS = 1e-8
REWARD_DENOM_FLOOR = 1e-4


@dataclass
class RunningMoments:
    """Welford accumulator of count, mean and sum of squared deviations."""

    shape: tuple[int, ...] = ()
    count: int = 0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.shape)
        if self.m2 is None:
            self.m2 = np.zeros(self.shape)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.mean.shape:
            raise UsageError(f"sample shape {x.shape} != accumulator shape {self.mean.shape}")
        self.count += 1
        diff = x - self.mean
        self.mean = self.mean + diff / self.count
        self.m2 = self.m2 + diff * (x - self.mean)

    @property
    def variance(self) -> np.ndarray:
        """Unbiased sample variance (zeros while fewer than two samples)."""
        if self.count < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.count - 1)


def normalize_observation(stats: RunningMoments, obs, update: bool = True):
    """Push ``obs`` into ``stats`` and return ``(obs - mean) / sqrt(var + 1e-8)``.

    With fewer than two samples seen the observation passes through unchanged.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if update:
        stats.update(obs)
    if stats.count < 2:
        return obs.copy(), stats
    return (obs - stats.mean) / np.sqrt(stats.variance + NORM_EPS), stats


@dataclass
class RewardScaleState:
    u: float = 0.0
    moments: RunningMoments = field(default_factory=RunningMoments)


def scale_reward(state: RewardScaleState, reward: float, discount: float, terminal: bool, update: bool = True):
    """Divide ``reward`` by the running std of the discounted reward sum ``u``.

    ``u <- (0 if terminal else discount * u) + reward``; the divisor is
    ``max(sqrt(var(u) + 1e-8), 1e-4)``. Rewards pass through unchanged until
    two values of ``u`` have been seen.
    """
    if update:
        state.u = (0.0 if terminal else discount * state.u) + reward
        state.moments.update(state.u)
    if state.moments.count < 2:
        return float(reward), state
    denom = max(math.sqrt(float(state.moments.variance) + NORM_EPS), REWARD_DENOM_FLOOR)
    return reward / denom, state


class Wrapper(Env):
    def __init__(self, env: Env):
        super().__init__()
        self.env = env
        self.spec = env.spec
        self._training = True

    @property
    def training(self) -> bool:
        return self._training

    @training.setter
    def training(self, flag: bool) -> None:
        self._training = flag
        if isinstance(self.env, Wrapper):
            self.env.training = flag

    @property
    def unwrapped(self) -> Env:
        env = self.env
        while isinstance(env, Wrapper):
            env = env.env
        return env

    def _reset(self, seed):
        return self.env.reset(seed)

    def _step(self, action):
        return self.env.step(action)

    def close(self) -> None:
        self.env.close()


class TimeLimit(Wrapper):
    """Ends the episode after ``max_steps`` steps, flagging it as truncated."""

    def __init__(self, env: Env, max_steps: int):
        super().__init__(env)
        if max_steps < 1:
            raise UsageError("max_steps must be positive")
        self.max_steps = max_steps
        self.elapsed = 0

    def _reset(self, seed):
        self.elapsed = 0
        return self.env.reset(seed)

    def _step(self, action):
        result = self.env.step(action)
        self.elapsed += 1
        if self.elapsed >= self.max_steps and not result.terminal:
            result.terminal = True
            result.truncated = True
        return result


class ScaleReward(Wrapper):
    def __init__(self, env: Env, discount: float):
        super().__init__(env)
        self.discount = discount
        self.state = RewardScaleState()

    def _step(self, action):
        result = self.env.step(action)
        # only natural termination resets the discounted sum
        ended = result.terminal and not result.truncated
        result.reward, _ = scale_reward(self.state, result.reward, self.discount, ended, update=self._training)
        return result


class NormalizeObservation(Wrapper):
    def __init__(self, env: Env):
        super().__init__(env)
        self.stats = RunningMoments((env.spec.observation_dim,))

    def _reset(self, seed):
        obs = self.env.reset(seed)
        return normalize_observation(self.stats, obs, update=self._training)[0]

    def _step(self, action):
        result = self.env.step(action)
        result.obs = normalize_observation(self.stats, result.obs, update=self._training)[0]
        return result


def wrap(env: Env, discount: float, max_episode_steps: int | None = None,
         normalize_obs: bool = True, scale_rewards: bool = True) -> Env:
    """Apply the standard stack: observation-normalise over reward-scale over time-limit."""
    if max_episode_steps:
        env = TimeLimit(env, max_episode_steps)
    if scale_rewards:
        env = ScaleReward(env, discount)
    if normalize_obs:
        env = NormalizeObservation(env)
    return env
