import math
import sys
from pathlib import Path

import numpy as np
import pytest

from streamrl.envs import (
    BridgeEnv, Catch, ChainMDP, EnvSpec, GridWorld, NormalizeObservation, RandomMDP, RewardScaleState,
    RunningMoments, ScaleReward, TimeLimit, make_env, normalize_observation, scale_reward, wrap,
)
from streamrl.errors import ConfigurationError, EnvironmentFault, UsageError

CHILD = str(Path(__file__).with_name("bridge_child.py"))


def builtin_envs():
    return [ChainMDP(5), GridWorld(), Catch(), RandomMDP(4, 3, mdp_seed=2)]


def stacks():
    for base in builtin_envs():
        yield base
        yield TimeLimit(base, 20)
        yield wrap(base, 0.99, max_episode_steps=20)
        yield wrap(base, 0.9, max_episode_steps=15, normalize_obs=False)


def rollout(env, seed, actions):
    obs = [env.reset(seed)]
    rewards = []
    for a in actions:
        res = env.step(a)
        obs.append(res.obs)
        rewards.append(res.reward)
        if res.terminal:
            break
    return np.array(obs), rewards


@pytest.mark.parametrize("env", list(stacks()), ids=lambda e: type(e).__name__)
def test_interface_conformance(env):
    rng = np.random.default_rng(0)
    spec = env.spec
    for episode in range(3):
        obs = env.reset(episode)
        assert obs.shape == (spec.observation_dim,) and obs.dtype == np.float64
        for _ in range(200):
            res = env.step(int(rng.integers(spec.action_count)))
            assert res.obs.shape == (spec.observation_dim,)
            assert np.all(np.isfinite(res.obs)) and math.isfinite(res.reward)
            assert not res.truncated or res.terminal
            if res.terminal:
                break
        if res.terminal:
            with pytest.raises(UsageError):
                env.step(0)
    env.reset(0)
    with pytest.raises(UsageError):
        env.step(spec.action_count)


@pytest.mark.parametrize("make", [lambda: ChainMDP(6), GridWorld, Catch, lambda: RandomMDP(5, 2, 1)])
def test_builtins_deterministic_given_seed_and_actions(make):
    actions = np.random.default_rng(1).integers(0, 2, size=50)
    a_obs, a_rew = rollout(make(), 11, actions)
    b_obs, b_rew = rollout(make(), 11, actions)
    np.testing.assert_array_equal(a_obs, b_obs)
    assert a_rew == b_rew


def test_chain_start_and_always_right():
    env = ChainMDP(5)
    for seed in (0, 1, 99):
        np.testing.assert_array_equal(env.reset(seed), [1, 0, 0, 0, 0])
    rewards = []
    res = None
    while res is None or not res.terminal:
        res = env.step(ChainMDP.RIGHT)
        rewards.append(res.reward)
    assert rewards == [0.0, 0.0, 0.0, 1.0]


def test_chain_left_at_origin_stays():
    env = ChainMDP(4)
    env.reset()
    res = env.step(ChainMDP.LEFT)
    assert res.obs.tolist() == [1, 0, 0, 0] and res.reward == 0.0 and not res.terminal


def test_gridworld_wall_bump():
    env = GridWorld()
    env.reset()
    env.step(1)  # (1, 0)
    res = env.step(2)  # (1, 1) is a wall
    assert env.pos == (1, 0) and res.reward == 0.0 and not res.terminal


def test_gridworld_reaches_goal():
    env = GridWorld()
    env.reset()
    path = [1, 1, 1, 1, 2, 2, 2, 2]  # along the top row, then down the right column
    for a in path[:-1]:
        assert not env.step(a).terminal
    res = env.step(path[-1])
    assert res.terminal and res.reward == 1.0


def test_gridworld_rejects_bad_layout():
    with pytest.raises(ConfigurationError):
        GridWorld(goal=(9, 9))
    with pytest.raises(ConfigurationError):
        GridWorld(start=(1, 1))


def test_catch_seeded_column_and_tracking_policy():
    env = Catch()
    cols = {Catch().reset(5)[:5].argmax() for _ in range(3)}
    assert len(cols) == 1
    for seed in range(10):
        env.reset(seed)
        res = None
        while res is None or not res.terminal:
            col = env.ball[1]
            action = 1 + int(np.sign(col - env.paddle))
            res = env.step(action)
        assert res.reward == 1.0


def test_random_mdp_rows_stochastic():
    env = RandomMDP(6, 3, mdp_seed=4)
    assert np.max(np.abs(env.P.sum(axis=2) - 1.0)) <= 1e-12
    np.testing.assert_array_equal(env.P, RandomMDP(6, 3, mdp_seed=4).P)


def test_make_env():
    assert isinstance(make_env("chain", n=3), ChainMDP)
    with pytest.raises(ConfigurationError):
        make_env("pong")
    with pytest.raises(ConfigurationError):
        make_env("chain", bogus=1)


def test_running_moments_welford():
    m = RunningMoments()
    for x in (1.0, 2.0, 3.0):
        m.update(x)
    assert m.mean == 2.0 and m.variance == 1.0


def test_normalize_observation_first_passes_through_then_constant_goes_to_zero():
    stats = RunningMoments((2,))
    first, _ = normalize_observation(stats, [3.0, -1.0])
    assert first.tolist() == [3.0, -1.0]
    second, _ = normalize_observation(stats, [3.0, -1.0])
    assert second.tolist() == [0.0, 0.0]


def test_normalize_observation_standardises_stationary_stream():
    rng = np.random.default_rng(3)
    stats = RunningMoments((3,))
    outs = [normalize_observation(stats, rng.normal([5.0, -2.0, 0.0], [3.0, 0.5, 10.0]))[0] for _ in range(10_000)]
    tail = np.array(outs[5000:])
    assert np.all(np.abs(tail.mean(axis=0)) < 0.05)
    assert np.all(np.abs(tail.var(axis=0) - 1.0) < 0.05)


def test_normalize_without_update_leaves_stats():
    stats = RunningMoments((1,))
    for x in (0.0, 2.0):
        normalize_observation(stats, [x])
    out, _ = normalize_observation(stats, [4.0], update=False)
    assert stats.count == 2 and out[0] == pytest.approx(3 / math.sqrt(2))


def test_scale_reward_examples():
    state = RewardScaleState()
    assert all(scale_reward(state, 0.0, 0.99, False)[0] == 0.0 for _ in range(10))
    const = RewardScaleState()
    outs = [scale_reward(const, 1.0, 0.0, False)[0] for _ in range(5)]
    assert outs[0] == 1.0 and outs[-1] == 1.0 / 1e-4
    signs = RewardScaleState()
    rng = np.random.default_rng(0)
    for r in rng.normal(size=200):
        assert np.sign(scale_reward(signs, r, 0.9, False)[0]) == np.sign(r)


def test_time_limit_truncates():
    env = TimeLimit(ChainMDP(10), 3)
    env.reset()
    results = [env.step(0) for _ in range(3)]
    assert [r.terminal for r in results] == [False, False, True]
    assert results[-1].truncated


def test_scale_reward_keeps_raw_reward():
    env = ScaleReward(ChainMDP(2), 0.9)
    for _ in range(3):
        env.reset()
        res = env.step(1)
    assert res.raw_reward == 1.0 and res.reward != 1.0


def test_eval_mode_freezes_statistics():
    env = wrap(GridWorld(), 0.99, 10)
    rollout(env, 0, [1, 2] * 5)
    count, mean = env.stats.count, env.stats.mean.copy()
    reward_count = env.env.state.moments.count
    env.training = False
    rollout(env, 0, [2, 1] * 5)
    assert env.stats.count == count and np.array_equal(env.stats.mean, mean)
    assert env.env.state.moments.count == reward_count


# -- subprocess bridge -----------------------------------------------------------


def bridge(mode="echo", timeout=5.0):
    return BridgeEnv([sys.executable, CHILD, mode], EnvSpec(3, 2), timeout=timeout)


def test_bridge_loopback():
    env = bridge()
    try:
        np.testing.assert_array_equal(env.reset(3), [1.5, -2.0, 3.0])
        res = env.step(1)
        np.testing.assert_array_equal(res.obs, [1.5, -2.0, 1.0])
        assert res.reward == 1.0 and not res.terminal
        env.step(0)
        assert env.step(0).terminal
        np.testing.assert_array_equal(env.reset(3), env.reset(3))
    finally:
        env.close()


def test_bridge_works_under_wrappers():
    env = wrap(bridge(), 0.99, max_episode_steps=2)
    try:
        env.reset(0)
        env.step(1)
        assert env.step(1).truncated
    finally:
        env.close()


def test_bridge_malformed_line_reports_content():
    env = bridge("malformed")
    try:
        env.reset(0)
        with pytest.raises(EnvironmentFault, match="not json"):
            env.step(0)
    finally:
        env.close()


def test_bridge_child_exit():
    env = bridge("exit")
    try:
        env.reset(0)
        with pytest.raises(EnvironmentFault, match="exited"):
            env.step(0)
    finally:
        env.close()


def test_bridge_timeout():
    env = bridge("slow", timeout=0.5)
    try:
        env.reset(0)
        with pytest.raises(EnvironmentFault, match="no reply"):
            env.step(0)
    finally:
        env.close()


def test_bridge_spawn_failure():
    with pytest.raises(EnvironmentFault):
        BridgeEnv(["/nonexistent/binary"], EnvSpec(1, 1))
