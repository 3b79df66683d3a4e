from .base import Env, EnvSpec, StepResult
from .bridge import BridgeEnv
from .builtin import Catch, ChainMDP, GridWorld, RandomMDP
from .wrappers import (
    NormalizeObservation,
    RewardScaleState,
    RunningMoments,
    ScaleReward,
    TimeLimit,
    Wrapper,
    normalize_observation,
    scale_reward,
    wrap,
)
from ..errors import ConfigurationError

BUILTIN = {
    "chain": ChainMDP,
    "gridworld": GridWorld,
    "catch": Catch,
    "random_mdp": RandomMDP,
}


def make_env(name: str, **params) -> Env:
    """Instantiate a built-in environment by name, or ``bridge`` with ``command`` and dims."""
    if name == "bridge":
        spec = EnvSpec(int(params.pop("observation_dim")), int(params.pop("action_count")))
        return BridgeEnv(params.pop("command"), spec, **params)
    try:
        cls = BUILTIN[name]
    except KeyError:
        raise ConfigurationError(f"unknown environment {name!r}; choose from {sorted(BUILTIN)} or 'bridge'") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name!r}: {exc}") from exc


__all__ = [
    "BUILTIN",
    "BridgeEnv",
    "Catch",
    "ChainMDP",
    "Env",
    "EnvSpec",
    "GridWorld",
    "NormalizeObservation",
    "RandomMDP",
    "RewardScaleState",
    "RunningMoments",
    "ScaleReward",
    "StepResult",
    "TimeLimit",
    "Wrapper",
    "make_env",
    "normalize_observation",
    "scale_reward",
    "wrap",
]
