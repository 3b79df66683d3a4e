"""Streaming control agents: one parameter update per transition, no replay, no target network.

Four learners share the MLP substrate:

* ``dqn``      -- semi-gradient Q-learning on SmoothL1 / MSE (or quantile Huber
                  for a QR head) optimised with Adam;
* ``c51``      -- categorical distributional Q-learning with Adam;
* ``streamq``  -- Q(lambda) with accumulating traces and ObGD step-size control;
* ``aqlambda`` -- Adaptive Q(lambda): traces scaled by a running second moment
                  of the value gradient, TD error clamped to [-1, 1].

Trace learners reset ``z`` after every transition that ends an episode or whose
action came from the exploration branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import approximator as nn
from . import objectives as obj
from . import optim
from .envs.base import Env
from .errors import ConfigurationError, NumericFault

ALGORITHMS = ("dqn", "c51", "streamq", "aqlambda")

# Table of per-algorithm defaults: step size, optimiser epsilon.
DEFAULT_LR = {"dqn": 2.2e-6, "c51": 4.6e-5, "streamq": 1.0, "aqlambda": 4.6e-4}
DEFAULT_OPT_EPS = {"dqn": 0.01, "c51": 0.01, "streamq": None, "aqlambda": 0.1}
DEFAULT_OBJECTIVE = {"dqn": "smooth_l1", "c51": "categorical", "streamq": "mse", "aqlambda": "smooth_l1"}
ALLOWED_OBJECTIVES = {
    "dqn": ("smooth_l1", "mse", "quantile"),
    "c51": ("categorical",),
    "streamq": ("mse",),
    "aqlambda": ("smooth_l1",),
}


@dataclass
class ExplorationSchedule:
    eps_start: float = 1.0
    eps_end: float = 0.01
    decay_steps: int = 2_500_000

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ConfigurationError(f"need 0 <= eps_end <= eps_start <= 1, got {self}")
        if self.decay_steps < 1:
            raise ConfigurationError("decay_steps must be positive")

    def epsilon(self, step: int) -> float:
        frac = min(max(step, 0) / self.decay_steps, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class OptimConfig:
    """Optimiser hyperparameters; ``lr``/``eps`` of ``None`` pick the per-algorithm default."""

    lr: float | None = None
    eps: float | None = None
    beta0: float = 0.999
    beta1: float = 0.999
    bias_correction: bool = False
    lam: float = 0.8
    kappa: float = 2.0
    huber_kappa: float = 1.0
    reset_v: bool = False


@dataclass
class NetworkConfig:
    hidden: tuple[int, ...] = (32, 32)
    layer_norm: bool = True
    sparsity: float = 0.9
    activation: str = "leaky_relu"
    atoms: int = 200
    quantiles: int = 50
    v_min: float = -10.0
    v_max: float = 10.0
    match_capacity: bool = False


@dataclass
class AgentConfig:
    algorithm: str = "dqn"
    objective: str | None = None
    gamma: float = 0.99
    optim: OptimConfig = field(default_factory=OptimConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    explore: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.objective is None:
            self.objective = DEFAULT_OBJECTIVE[self.algorithm]
        if self.objective not in ALLOWED_OBJECTIVES[self.algorithm]:
            raise ConfigurationError(
                f"objective {self.objective!r} incompatible with {self.algorithm!r}; "
                f"allowed: {ALLOWED_OBJECTIVES[self.algorithm]}"
            )
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")

    @property
    def lr(self) -> float:
        return DEFAULT_LR[self.algorithm] if self.optim.lr is None else self.optim.lr

    @property
    def opt_eps(self) -> float | None:
        return DEFAULT_OPT_EPS[self.algorithm] if self.optim.eps is None else self.optim.eps


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool
    greedy: bool
    truncated: bool = False

    @classmethod
    def from_step(cls, obs, action: int, greedy: bool, result) -> Transition:
        """Build from an env StepResult; time-limit endings keep bootstrapping."""
        natural_end = result.terminal and not result.truncated
        return cls(obs, action, result.reward, result.obs, natural_end, greedy, result.truncated)


@dataclass
class StepReport:
    delta: float
    update_norm: float
    loss: float


def build_network_spec(config: AgentConfig, obs_dim: int, n_actions: int) -> nn.NetworkSpec:
    net = config.network
    heads = {"categorical": net.atoms, "quantile": net.quantiles}.get(config.objective, 1)
    spec = nn.NetworkSpec(obs_dim, tuple(net.hidden), n_actions, heads, net.layer_norm, net.sparsity, net.activation)
    if heads == 1 and net.match_capacity:
        wide = nn.NetworkSpec(obs_dim, tuple(net.hidden), n_actions, net.atoms, net.layer_norm, net.sparsity, net.activation)
        spec = nn.matched_hidden_width(spec, wide.param_count)
    return spec


class StreamAgent:
    """Shared plumbing: network, epsilon-greedy acting, state accounting."""

    def __init__(self, config: AgentConfig, obs_dim: int, n_actions: int, explore_rng=None):
        self.config = config
        self.spec = build_network_spec(config, obs_dim, n_actions)
        self.params = nn.init_sparse(self.spec, config.seed)
        if explore_rng is None:
            explore_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
        self.explore_rng = explore_rng
        self.n_actions = n_actions
        # the forward pass done for acting is reused by the following update
        self._version = 0
        self._memo = None

    def _forward(self, obs):
        memo = self._memo
        if memo is not None and memo[0] == self._version and np.array_equal(memo[2].obs, obs):
            return memo[1], memo[2]
        out, cache = nn.forward(self.spec, self.params, obs)
        self._memo = (self._version, out, cache)
        return out, cache

    def params_changed(self) -> None:
        """Call after modifying ``params`` from outside the agent."""
        self._version += 1
        self._memo = None

    def q_values(self, obs) -> np.ndarray:
        return self._q_from_output(self._forward(obs)[0])

    def _q_from_output(self, out: np.ndarray) -> np.ndarray:
        return out

    def act(self, obs, global_step: int, rng=None, epsilon: float | None = None) -> tuple[int, bool]:
        """Epsilon-greedy action; ``greedy`` is False whenever the exploration branch fired."""
        rng = self.explore_rng if rng is None else rng
        eps = self.config.explore.epsilon(global_step) if epsilon is None else epsilon
        if rng.random() < eps:
            return int(rng.integers(self.n_actions)), False
        return int(np.argmax(self.q_values(obs))), True

    def observe(self, t: Transition) -> StepReport:
        raise NotImplementedError

    def state_arrays(self) -> list[np.ndarray]:
        return [self.params]

    def state_size(self) -> int:
        """Number of scalars of learner state (constant over the stream)."""
        return int(sum(a.size for a in self.state_arrays()))


class DQNAgent(StreamAgent):
    def __init__(self, config, obs_dim, n_actions, explore_rng=None):
        super().__init__(config, obs_dim, n_actions, explore_rng)
        o = config.optim
        self.adam = optim.AdamState.zeros(
            self.spec.param_count, beta0=o.beta0, beta1=o.beta1, epsilon=config.opt_eps,
            bias_correction=o.bias_correction,
        )

    def _q_from_output(self, out):
        return out.mean(axis=1) if out.ndim == 2 else out

    def state_arrays(self):
        return [self.params, self.adam.m, self.adam.v, self.adam.last_update]

    def observe(self, t: Transition) -> StepReport:
        cfg = self.config
        out, cache = self._forward(t.obs)
        if t.terminal:
            next_out = None
        else:
            next_out = nn.forward(self.spec, self.params, t.next_obs)[0]
        output_grad = np.zeros_like(out)

        if cfg.objective == "quantile":
            theta = out[t.action]
            if next_out is None:
                targets = np.full(theta.size, t.reward)
                q_next = 0.0
            else:
                next_q = next_out.mean(axis=1)
                best = int(np.argmax(next_q))
                targets = t.reward + cfg.gamma * next_out[best]
                q_next = next_q[best]
            delta = obj.td_error_control(theta.mean(), q_next, t.reward, cfg.gamma, t.terminal)
            lg = obj.quantile_huber(theta, targets, cfg.optim.huber_kappa)
        else:
            q_next = 0.0 if next_out is None else float(np.max(next_out))
            q_sa = float(out[t.action])
            delta = obj.td_error_control(q_sa, q_next, t.reward, cfg.gamma, t.terminal)
            target = q_sa + delta
            if cfg.objective == "mse":
                lg = obj.mse(q_sa, target)
            else:
                lg = obj.smooth_l1(q_sa, target, cfg.optim.huber_kappa)
        output_grad[t.action] = lg.grad
        grad = nn.backward(self.spec, self.params, cache, output_grad)
        optim.adam_step(self.adam, self.params, grad, cfg.lr)
        self.params_changed()
        self.last_output_grad_norm = float(np.max(np.abs(output_grad)))
        return StepReport(float(delta), float(np.linalg.norm(self.adam.last_update)), float(lg.loss))


class C51Agent(StreamAgent):
    def __init__(self, config, obs_dim, n_actions, explore_rng=None):
        super().__init__(config, obs_dim, n_actions, explore_rng)
        o = config.optim
        self.atoms = obj.atom_grid(config.network.v_min, config.network.v_max, config.network.atoms)
        self.adam = optim.AdamState.zeros(
            self.spec.param_count, beta0=o.beta0, beta1=o.beta1, epsilon=config.opt_eps,
            bias_correction=o.bias_correction,
        )

    def _q_from_output(self, out):
        return obj.softmax(out) @ self.atoms

    def state_arrays(self):
        return [self.params, self.adam.m, self.adam.v, self.adam.last_update, self.atoms]

    def observe(self, t: Transition) -> StepReport:
        cfg = self.config
        logits, cache = self._forward(t.obs)
        q_sa = float(obj.softmax(logits[t.action]) @ self.atoms)
        if t.terminal:
            source = np.zeros(self.atoms.size)
            source[0] = 1.0
            q_next = 0.0
        else:
            next_probs = obj.softmax(nn.forward(self.spec, self.params, t.next_obs)[0])
            next_q = next_probs @ self.atoms
            best = int(np.argmax(next_q))
            source = next_probs[best]
            q_next = float(next_q[best])
        target = obj.c51_project(obj.CategoricalDistribution(self.atoms, source), t.reward, cfg.gamma, t.terminal)
        lg = obj.c51_cross_entropy(logits[t.action], target)
        output_grad = np.zeros_like(logits)
        output_grad[t.action] = lg.grad
        grad = nn.backward(self.spec, self.params, cache, output_grad)
        optim.adam_step(self.adam, self.params, grad, cfg.lr)
        self.params_changed()
        self.last_output_grad_norm = float(np.max(np.abs(output_grad)))
        delta = obj.td_error_control(q_sa, q_next, t.reward, cfg.gamma, t.terminal)
        return StepReport(float(delta), float(np.linalg.norm(self.adam.last_update)), float(lg.loss))


class TraceAgent(StreamAgent):
    """Q(lambda)-family learner; subclasses choose the step rule."""

    adaptive = False

    def __init__(self, config, obs_dim, n_actions, explore_rng=None):
        super().__init__(config, obs_dim, n_actions, explore_rng)
        decay = config.gamma * config.optim.lam
        self.trace = optim.TraceState.zeros(self.spec.param_count, decay, adaptive=self.adaptive)

    def state_arrays(self):
        arrays = [self.params, self.trace.z, self.trace.last_update]
        if self.trace.v is not None:
            arrays.append(self.trace.v)
        return arrays

    def _apply(self, delta: float) -> None:
        raise NotImplementedError

    def observe(self, t: Transition) -> StepReport:
        cfg = self.config
        q, cache = self._forward(t.obs)
        one_hot = np.zeros_like(q)
        one_hot[t.action] = 1.0
        grad_q = nn.backward(self.spec, self.params, cache, one_hot)
        q_next = 0.0 if t.terminal else float(np.max(nn.forward(self.spec, self.params, t.next_obs)[0]))
        delta = obj.td_error_control(float(q[t.action]), q_next, t.reward, cfg.gamma, t.terminal)
        optim.trace_accumulate(self.trace, grad_q)
        self._apply(delta)
        self.params_changed()
        if t.terminal or t.truncated or not t.greedy:
            optim.reset_trace(self.trace, reset_v=cfg.optim.reset_v)
        return StepReport(float(delta), float(np.linalg.norm(self.trace.last_update)), float(delta * delta))


class StreamQAgent(TraceAgent):
    def _apply(self, delta):
        optim.obgd_step(self.trace, self.params, delta, self.config.lr, self.config.optim.kappa)


class AQLambdaAgent(TraceAgent):
    adaptive = True

    def _apply(self, delta):
        optim.aq_lambda_step(self.trace, self.params, delta, self.config.lr, self.config.opt_eps)


AGENTS = {"dqn": DQNAgent, "c51": C51Agent, "streamq": StreamQAgent, "aqlambda": AQLambdaAgent}


def make_agent(config: AgentConfig, obs_dim: int, n_actions: int, explore_rng=None) -> StreamAgent:
    return AGENTS[config.algorithm](config, obs_dim, n_actions, explore_rng)


@dataclass
class EpisodeResult:
    episode_return: float
    steps: int
    reports: list[StepReport]


def run_episode(
    agent: StreamAgent,
    env: Env,
    rng=None,
    step_budget: int = 10**9,
    seed: int | None = None,
    global_step: int = 0,
    learn: bool = True,
    epsilon: float | None = None,
    keep_reports: bool = True,
) -> EpisodeResult:
    """Reset ``env`` and interact until the episode ends or ``step_budget`` runs out.

    The returned return sums raw (pre-normalisation) rewards. With
    ``learn=False`` the agent only acts, which is how evaluation episodes run.
    """
    if step_budget <= 0:
        return EpisodeResult(0.0, 0, [])
    obs = env.reset(seed)
    total, steps, reports = 0.0, 0, []
    while steps < step_budget:
        action, greedy = agent.act(obs, global_step + steps, rng, epsilon)
        result = env.step(action)
        total += result.raw_reward
        if learn:
            try:
                report = agent.observe(Transition.from_step(obs, action, greedy, result))
            except NumericFault as fault:
                fault.step = global_step + steps
                raise
            if keep_reports:
                reports.append(report)
        steps += 1
        obs = result.obs
        if result.terminal:
            break
    return EpisodeResult(total, steps, reports)
