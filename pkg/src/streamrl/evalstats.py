"""Aggregate reporting: normalised scores, IQM, stratified bootstrap CIs, probability of improvement."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError

ScoreMatrix = dict[str, np.ndarray]
"""Normalised scores keyed by environment, one entry per run."""


@dataclass(frozen=True)
class RunRecord:
    env_name: str
    seed: int
    steps: tuple[int, ...]
    returns: tuple[float, ...]

    def __post_init__(self):
        if len(self.steps) != len(self.returns):
            raise ConfigurationError("steps and returns must have equal length")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ConfigurationError(f"steps must be strictly increasing in run {self.env_name}/{self.seed}")

    def tail_mean(self, window: int = 10) -> float:
        """Mean of the last ``window`` evaluations."""
        if not self.returns:
            raise ConfigurationError(f"run {self.env_name}/{self.seed} has no evaluations")
        return float(np.mean(self.returns[-window:]))


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    warning: str | None = None


def normalize_scores(raw: Mapping[str, Sequence[float]], baselines: Mapping[str, tuple[float, float]]) -> ScoreMatrix:
    """``(raw - random) / (reference - random)`` per environment."""
    out = {}
    for env, scores in raw.items():
        if env not in baselines:
            raise ConfigurationError(f"no baseline for environment {env!r}")
        random_score, reference = baselines[env]
        if reference == random_score:
            raise ConfigurationError(f"baseline for {env!r} has reference == random")
        out[env] = (np.asarray(scores, dtype=np.float64) - random_score) / (reference - random_score)
    return out


def iqm(samples) -> float:
    """Mean after dropping ``floor(n / 4)`` samples from each end."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if x.size == 0:
        raise ConfigurationError("iqm of an empty sample")
    cut = x.size // 4
    return float(x[cut : x.size - cut].mean())


def pooled_iqm(matrix: ScoreMatrix) -> float:
    return iqm(np.concatenate([np.ravel(v) for v in matrix.values()]))


def pooled_mean(matrix: ScoreMatrix) -> float:
    return float(np.concatenate([np.ravel(v) for v in matrix.values()]).mean())


def stratified_bootstrap_ci(
    matrix: ScoreMatrix,
    statistic: Callable[[ScoreMatrix], float] = pooled_iqm,
    resamples: int = 2000,
    level: float = 0.95,
    rng: np.random.Generator | int | None = 0,
) -> ConfidenceInterval:
    """Percentile bootstrap interval, resampling runs independently inside each environment.

    Environments are visited in sorted order so the draw sequence, and hence
    the interval, only depends on ``rng``.
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    if resamples < 1:
        raise ConfigurationError("need at least one resample")
    note = None
    if resamples < 100:
        note = f"only {resamples} bootstrap resamples; interval is unreliable"
        warnings.warn(note, stacklevel=2)
    rng = np.random.default_rng(rng)
    envs = sorted(matrix)
    arrays = {env: np.asarray(matrix[env], dtype=np.float64) for env in envs}
    stats = np.empty(resamples)
    for i in range(resamples):
        sample = {}
        for env in envs:
            x = arrays[env]
            sample[env] = x[rng.integers(0, x.size, size=x.size)]
        stats[i] = statistic(sample)
    tail = (1.0 - level) / 2.0
    low, high = np.percentile(stats, [100.0 * tail, 100.0 * (1.0 - tail)])
    return ConfidenceInterval(float(low), float(high), note)


def _pairwise_improvement(x: np.ndarray, y: np.ndarray) -> Fraction:
    wins = int((x[:, None] > y[None, :]).sum())
    ties = int((x[:, None] == y[None, :]).sum())
    return Fraction(2 * wins + ties, 2 * x.size * y.size)


def probability_of_improvement(scores_x: Mapping[str, Sequence[float]], scores_y: Mapping[str, Sequence[float]]) -> float:
    """Mann-Whitney style ``P(X > Y) + P(X = Y) / 2`` per environment, averaged over environments."""
    if set(scores_x) != set(scores_y):
        raise ConfigurationError("both score sets must cover the same environments")
    if not scores_x:
        raise ConfigurationError("no environments to compare")
    per_env = [
        _pairwise_improvement(np.asarray(scores_x[e], dtype=np.float64), np.asarray(scores_y[e], dtype=np.float64))
        for e in sorted(scores_x)
    ]
    # exact rational arithmetic keeps P(x, y) + P(y, x) == 1 bit-for-bit
    return float(sum(per_env, Fraction(0)) / len(per_env))
