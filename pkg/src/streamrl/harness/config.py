"""Flat ``section.key = value`` configuration files mapped onto nested dataclasses.

Scalars are written bare (``true``/``false``, ``none``, ``repr`` for floats);
tuples use JSON list syntax. Unknown keys are errors everywhere: in files, in
``--key value`` CLI flags and in ``STREAMRL_SECTION__KEY`` environment variables.
"""

from __future__ import annotations

import dataclasses
import json
import os
import types
import typing
from dataclasses import dataclass, field
from typing import Any

from ..agents import AgentConfig, ExplorationSchedule, NetworkConfig, OptimConfig
from ..envs import BUILTIN
from ..errors import ConfigurationError

ENV_PREFIX = "STREAMRL_"


@dataclass
class AgentSection:
    algorithm: str = "dqn"
    objective: str | None = None
    gamma: float = 0.99


@dataclass
class ChainParams:
    n: int = 7


@dataclass
class GridParams:
    width: int = 5
    height: int = 5
    walls: tuple[tuple[int, int], ...] = ((1, 1), (2, 1), (3, 3), (1, 3))
    goal: tuple[int, int] = (4, 4)
    start: tuple[int, int] = (0, 0)
    pits: tuple[tuple[int, int], ...] = ()
    step_reward: float = 0.0
    pit_reward: float = -1.0


@dataclass
class CatchParams:
    rows: int = 10
    cols: int = 5


@dataclass
class RandomMDPParams:
    n_states: int = 5
    n_actions: int = 2
    mdp_seed: int = 0


@dataclass
class BridgeParams:
    command: str = ""
    observation_dim: int = 1
    action_count: int = 1
    timeout: float = 10.0


@dataclass
class EnvConfig:
    names: tuple[str, ...] = ("chain",)
    max_episode_steps: int = 100
    normalize_obs: bool = True
    scale_reward: bool = True
    chain: ChainParams = field(default_factory=ChainParams)
    gridworld: GridParams = field(default_factory=GridParams)
    catch: CatchParams = field(default_factory=CatchParams)
    random_mdp: RandomMDPParams = field(default_factory=RandomMDPParams)
    bridge: BridgeParams = field(default_factory=BridgeParams)

    def params_for(self, name: str) -> dict:
        section = {"chain": self.chain, "gridworld": self.gridworld, "catch": self.catch,
                   "random_mdp": self.random_mdp, "bridge": self.bridge}[name]
        return dataclasses.asdict(section)


@dataclass
class RunConfig:
    total_steps: int = 20_000
    eval_every: int = 2_000
    eval_episodes: int = 5
    eval_epsilon: float = 0.01
    eval_window: int = 10
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    log_every: int = 100
    inject_nan_step: int = -1


@dataclass
class ExperimentConfig:
    agent: AgentSection = field(default_factory=AgentSection)
    optim: OptimConfig = field(default_factory=OptimConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    explore: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    env: EnvConfig = field(default_factory=EnvConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def agent_config(self, seed: int) -> AgentConfig:
        return AgentConfig(
            algorithm=self.agent.algorithm,
            objective=self.agent.objective,
            gamma=self.agent.gamma,
            optim=dataclasses.replace(self.optim),
            network=dataclasses.replace(self.network),
            explore=dataclasses.replace(self.explore),
            seed=seed,
        )

    def validate(self) -> None:
        run = self.run
        if run.total_steps <= 0:
            raise ConfigurationError("run.total_steps must be positive")
        if not run.seeds:
            raise ConfigurationError("run.seeds must not be empty")
        if run.eval_every <= 0 or run.eval_episodes < 0 or run.log_every <= 0 or run.eval_window <= 0:
            raise ConfigurationError("run.eval_every, run.log_every and run.eval_window must be positive")
        if not self.env.names:
            raise ConfigurationError("env.names must not be empty")
        for name in self.env.names:
            if name not in BUILTIN and name != "bridge":
                raise ConfigurationError(f"unknown environment {name!r}")
        if "bridge" in self.env.names and not self.env.bridge.command:
            raise ConfigurationError("env.bridge.command is required for the bridge environment")
        self.agent_config(run.seeds[0])


# -- generic dotted-key machinery ------------------------------------------------


def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def flatten(obj, prefix: str = "") -> dict[str, Any]:
    """Dotted key -> leaf value, in field declaration order."""
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(flatten(value, key + "."))
        else:
            out[key] = value
    return out


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return json.dumps(_to_lists(value))
    return str(value)


def _to_lists(value):
    if isinstance(value, (tuple, list)):
        return [_to_lists(v) for v in value]
    return value


def _to_tuples(value):
    if isinstance(value, list):
        return tuple(_to_tuples(v) for v in value)
    return value


def _coerce(text: str, hint, key: str):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if text.lower() in ("none", "null", "") and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(text, inner[0], key)
    try:
        if hint is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
        if origin is tuple:
            parsed = json.loads(text) if text.startswith("[") else [p.strip() for p in text.split(",") if p.strip()]
            if args and args[0] is not Ellipsis and not isinstance(args[0], type):
                return _to_tuples(parsed)
            elem = args[0] if args else str
            if elem in (int, float, str):
                return tuple(elem(p) for p in parsed)
            return _to_tuples(parsed)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"bad value {text!r} for {key}: {exc}") from None
    raise ConfigurationError(f"unsupported type {hint!r} for {key}")


def set_key(obj, key: str, text: str) -> None:
    """Assign the string ``text`` to dotted ``key`` inside ``obj``, converting by type hint."""
    parts = key.split(".")
    target = obj
    for part in parts[:-1]:
        if not dataclasses.is_dataclass(target) or part not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigurationError(f"unknown config key {key!r}")
        target = getattr(target, part)
    leaf = parts[-1]
    if not dataclasses.is_dataclass(target) or leaf not in {f.name for f in dataclasses.fields(target)}:
        raise ConfigurationError(f"unknown config key {key!r}")
    hint = _hints(type(target))[leaf]
    if dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigurationError(f"{key!r} is a section, not a key")
    setattr(target, leaf, _coerce(text, hint, key))


def parse_lines(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def to_text(obj) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in flatten(obj).items())


def env_overrides(environ=None, prefix: str = ENV_PREFIX) -> list[tuple[str, str]]:
    environ = os.environ if environ is None else environ
    pairs = []
    for name in sorted(environ):
        if name.startswith(prefix):
            pairs.append((name[len(prefix):].lower().replace("__", "."), environ[name]))
    return pairs


def build(cls, text: str = "", overrides=(), environ=None, env_prefix: str = ENV_PREFIX):
    """Defaults, then file text, then environment variables, then explicit overrides."""
    obj = cls()
    for key, value in parse_lines(text):
        set_key(obj, key, value)
    for key, value in env_overrides(environ, env_prefix):
        set_key(obj, key, value)
    for key, value in overrides:
        set_key(obj, key, value)
    # re-run dataclass validation hooks after mutation
    _revalidate(obj)
    return obj


def _revalidate(obj) -> None:
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            _revalidate(value)
    post = getattr(obj, "__post_init__", None)
    if post is not None:
        post()


def parse_experiment(text: str = "", overrides=(), environ=None) -> ExperimentConfig:
    cfg = build(ExperimentConfig, text, overrides, environ)
    cfg.validate()
    return cfg
