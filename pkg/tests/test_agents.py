import numpy as np
import pytest

from streamrl import agents as ag
from streamrl import approximator as nn
from streamrl.envs import ChainMDP, EnvSpec, GridWorld, StepResult, wrap
from streamrl.envs.base import Env
from streamrl.errors import ConfigurationError, NumericFault


def make(alg, obs_dim=4, n_actions=3, **optim_kw):
    cfg = ag.AgentConfig(algorithm=alg, optim=ag.OptimConfig(**optim_kw),
                         network=ag.NetworkConfig(hidden=(8, 8), atoms=21))
    return ag.make_agent(cfg, obs_dim, n_actions)


class OneShot(Env):
    """Terminates on the first step with reward 1."""

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(2, 2)

    def _reset(self, seed):
        return np.zeros(2)

    def _step(self, action):
        return StepResult(np.zeros(2), 1.0, True)


class ConstantBandit(Env):
    """Single state, single action, constant reward, endless."""

    def __init__(self, reward):
        super().__init__()
        self.spec = EnvSpec(1, 1)
        self.reward = reward

    def _reset(self, seed):
        return np.ones(1)

    def _step(self, action):
        return StepResult(np.ones(1), self.reward, False)


@pytest.mark.parametrize("step,eps", [(0, 1.0), (100, 0.01), (150, 0.01), (50, 0.505)])
def test_exploration_schedule(step, eps):
    assert ag.ExplorationSchedule(1.0, 0.01, 100).epsilon(step) == pytest.approx(eps, abs=1e-15)


def test_schedule_and_config_validation():
    with pytest.raises(ConfigurationError):
        ag.ExplorationSchedule(0.1, 0.5, 10)
    with pytest.raises(ConfigurationError):
        ag.AgentConfig(algorithm="sarsa")
    with pytest.raises(ConfigurationError):
        ag.AgentConfig(algorithm="c51", objective="mse")


def test_table_defaults():
    cfg = ag.AgentConfig(algorithm="aqlambda")
    assert cfg.lr == 4.6e-4 and cfg.opt_eps == 0.1 and cfg.objective == "smooth_l1"
    assert ag.AgentConfig(algorithm="dqn").lr == 2.2e-6
    assert ag.AgentConfig(algorithm="streamq").lr == 1.0


def test_act_greedy_flag_follows_branch():
    agent = make("dqn")
    obs = np.ones(4)
    rng = np.random.default_rng(0)
    flags = [agent.act(obs, 0, rng, epsilon=1.0)[1] for _ in range(20)]
    assert not any(flags)
    action, greedy = agent.act(obs, 0, rng, epsilon=0.0)
    assert greedy and action == int(np.argmax(agent.q_values(obs)))


def test_argmax_ties_pick_lowest_index():
    agent = make("streamq")
    agent.params[:] = 0.0
    agent.params_changed()
    assert agent.act(np.ones(4), 0, epsilon=0.0) == (0, True)


def test_argmax_invariant_to_positive_output_scaling():
    agent = make("dqn")
    obs = np.arange(4.0)
    before = agent.act(obs, 0, epsilon=0.0)[0]
    nn.unpack(agent.spec, agent.params)[-1]["w"][:] *= 3.0
    nn.unpack(agent.spec, agent.params)[-1]["b"][:] *= 3.0
    agent.params_changed()
    assert agent.act(obs, 0, epsilon=0.0)[0] == before


@pytest.mark.parametrize("alg", ["dqn", "aqlambda", "streamq"])
def test_zero_error_transition_changes_nothing(alg):
    agent = make(alg)
    nn.unpack(agent.spec, agent.params)[-1]["w"][:] = 0.0
    agent.params_changed()
    before = agent.params.copy()
    t = ag.Transition(np.ones(4), 1, 0.0, np.ones(4) * 2, False, True)
    rep = agent.observe(t)
    assert rep.delta == 0.0 and rep.update_norm == 0.0
    np.testing.assert_array_equal(agent.params, before)


@pytest.mark.parametrize("alg", ["streamq", "aqlambda"])
@pytest.mark.parametrize("greedy,terminal,truncated", [(False, False, False), (True, True, False), (True, False, True)])
def test_trace_reset_rule(alg, greedy, terminal, truncated):
    agent = make(alg)
    rng = np.random.default_rng(0)
    agent.observe(ag.Transition(rng.normal(size=4), 0, 1.0, rng.normal(size=4), False, True))
    assert np.abs(agent.trace.z).max() > 0
    agent.observe(ag.Transition(rng.normal(size=4), 2, 0.5, rng.normal(size=4), terminal, greedy, truncated))
    assert np.abs(agent.trace.z).max() == 0.0
    if alg == "aqlambda":
        assert np.abs(agent.trace.v).max() > 0


def test_trace_kept_after_greedy_nonterminal_step():
    agent = make("streamq")
    rng = np.random.default_rng(1)
    agent.observe(ag.Transition(rng.normal(size=4), 0, 1.0, rng.normal(size=4), False, True))
    assert np.abs(agent.trace.z).max() > 0


def test_truncation_bootstraps():
    agent = make("dqn", lr=0.0)
    obs, nxt = np.ones(4), np.full(4, -1.0)
    q_next = agent.q_values(nxt).max()
    q_now = agent.q_values(obs)[1]
    res = StepResult(nxt, 0.5, True, truncated=True)
    rep = agent.observe(ag.Transition.from_step(obs, 1, True, res))
    assert rep.delta == pytest.approx(0.5 + 0.99 * q_next - q_now, abs=1e-12)


def test_dqn_smooth_l1_output_grad_is_bounded():
    agent = make("dqn", lr=1e-2)
    rng = np.random.default_rng(2)
    for _ in range(200):
        agent.observe(ag.Transition(rng.normal(size=4), int(rng.integers(3)), float(rng.normal(0, 1e6)),
                                    rng.normal(size=4), bool(rng.random() < 0.1), True))
        assert agent.last_output_grad_norm <= 1.0


def test_dqn_quantile_head_runs():
    cfg = ag.AgentConfig(algorithm="dqn", objective="quantile", network=ag.NetworkConfig(hidden=(8,), quantiles=5))
    agent = ag.make_agent(cfg, 2, 2)
    assert agent.spec.atoms == 5
    rep = agent.observe(ag.Transition(np.ones(2), 0, 1.0, np.zeros(2), False, True))
    assert np.isfinite(rep.loss) and agent.last_output_grad_norm <= 1.0


def test_match_capacity_widens_scalar_head():
    cfg = ag.AgentConfig(algorithm="dqn", network=ag.NetworkConfig(hidden=(16, 16), atoms=51, match_capacity=True))
    spec = ag.build_network_spec(cfg, 4, 3)
    c51 = ag.build_network_spec(ag.AgentConfig(algorithm="c51", network=cfg.network), 4, 3)
    assert spec.hidden_dims[-1] > 16
    assert 0 < spec.param_count - c51.param_count <= nn.row_size(spec)


def test_c51_constant_reward_fixed_point():
    env = ConstantBandit(0.7)
    cfg = ag.AgentConfig(algorithm="c51", gamma=0.0, optim=ag.OptimConfig(lr=1e-2),
                         network=ag.NetworkConfig(hidden=(8,), atoms=21, v_min=-2.0, v_max=2.0),
                         explore=ag.ExplorationSchedule(0.0, 0.0, 1))
    agent = ag.make_agent(cfg, 1, 1)
    ag.run_episode(agent, env, step_budget=3000, keep_reports=False)
    assert abs(agent.q_values(np.ones(1))[0] - 0.7) <= 0.2


def test_run_episode_edge_cases():
    agent = make("dqn", obs_dim=2, n_actions=2)
    res = ag.run_episode(agent, OneShot())
    assert res.episode_return == 1.0 and res.steps == 1
    empty = ag.run_episode(agent, OneShot(), step_budget=0)
    assert empty.episode_return == 0.0 and empty.steps == 0


@pytest.mark.parametrize("alg", ag.ALGORITHMS)
def test_run_episode_deterministic(alg):
    def once():
        agent = make(alg, obs_dim=5, n_actions=2, lr=1e-2)
        env = wrap(ChainMDP(5), 0.99, 30)
        out = [ag.run_episode(agent, env, seed=3, global_step=i * 30) for i in range(3)]
        return [r.episode_return for r in out], [rep.delta for r in out for rep in r.reports], agent.params

    a, b = once(), once()
    assert a[0] == b[0] and a[1] == b[1]
    np.testing.assert_array_equal(a[2], b[2])


def test_evaluation_returns_raw_rewards():
    agent = make("streamq", obs_dim=2, n_actions=2)
    env = wrap(ChainMDP(2), 0.99, 10)
    returns = [ag.run_episode(agent, env, learn=False).episode_return for _ in range(5)]
    assert set(returns) <= {0.0, 1.0} and 1.0 in returns


@pytest.mark.parametrize("alg", ag.ALGORITHMS)
def test_state_size_constant(alg):
    agent = make(alg, obs_dim=25, n_actions=4)
    env = wrap(GridWorld(), 0.99, 50)
    size = agent.state_size()
    g = 0
    while g < 600:
        g += ag.run_episode(agent, env, global_step=g, keep_reports=False).steps
        assert agent.state_size() == size


def test_numeric_fault_carries_step():
    agent = make("dqn", obs_dim=5, n_actions=2)
    agent.params[:] = np.nan
    agent.params_changed()
    with pytest.raises(NumericFault) as info:
        ag.run_episode(agent, ChainMDP(5), epsilon=1.0, global_step=17)
    assert info.value.step == 17
