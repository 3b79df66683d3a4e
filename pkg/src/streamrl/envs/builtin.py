"""Desk-scale tasks with one-hot or binary-grid observations.

ChainMDP and GridWorld are deterministic; Catch and RandomMDP draw their
randomness from a generator seeded at ``reset``. Each tabular task can export
itself as a :class:`streamrl.oracle.TabularMDP` for value iteration.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..oracle import TabularMDP
from .base import Env, EnvSpec, StepResult, one_hot


class ChainMDP(Env):
    """States ``0 .. n-1`` in a row; start at 0, actions 0 = left, 1 = right.

    Moving right from state ``n-2`` enters the right end ``n-1``, paying
    reward 1 and ending the episode. Left from 0 stays put. All other
    rewards are 0.
    """

    LEFT, RIGHT = 0, 1

    def __init__(self, n: int = 5):
        super().__init__()
        if n < 2:
            raise ConfigurationError("ChainMDP needs at least 2 states")
        self.n = n
        self.spec = EnvSpec(n, 2, reward_range=(0.0, 1.0))
        self.state = 0

    def _reset(self, seed):
        self.state = 0
        return one_hot(0, self.n)

    def _step(self, action):
        if action == self.RIGHT:
            self.state += 1
        else:
            self.state = max(self.state - 1, 0)
        done = self.state == self.n - 1
        return StepResult(one_hot(self.state, self.n), 1.0 if done else 0.0, done)

    def observation(self, state: int) -> np.ndarray:
        return one_hot(state, self.n)

    def decision_states(self) -> list[int]:
        return list(range(self.n - 1))

    def to_tabular(self, gamma: float) -> TabularMDP:
        n = self.n
        P = np.zeros((n, 2, n))
        R = np.zeros((n, 2))
        for s in range(n):
            if s == n - 1:
                P[s, :, s] = 1.0
                continue
            P[s, self.LEFT, max(s - 1, 0)] = 1.0
            P[s, self.RIGHT, s + 1] = 1.0
            if s + 1 == n - 1:
                R[s, self.RIGHT] = 1.0
        terminal = np.zeros(n, dtype=bool)
        terminal[n - 1] = True
        return TabularMDP(P, R, gamma, terminal)


class GridWorld(Env):
    """``width x height`` grid; actions up, right, down, left.

    Bumping into the border or a wall leaves the agent in place. Entering the
    goal pays 1 and ends the episode; entering a pit pays ``pit_reward`` and
    ends it. Every other step pays ``step_reward``.
    """

    MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))

    def __init__(
        self,
        width: int = 5,
        height: int = 5,
        walls=((1, 1), (2, 1), (3, 3), (1, 3)),
        goal=(4, 4),
        start=(0, 0),
        pits=(),
        step_reward: float = 0.0,
        pit_reward: float = -1.0,
    ):
        super().__init__()
        self.width, self.height = width, height
        self.walls = frozenset(tuple(w) for w in walls)
        self.pits = frozenset(tuple(p) for p in pits)
        self.goal, self.start = tuple(goal), tuple(start)
        self.step_reward, self.pit_reward = step_reward, pit_reward
        for cell in (self.goal, self.start, *self.walls, *self.pits):
            if not (0 <= cell[0] < width and 0 <= cell[1] < height):
                raise ConfigurationError(f"cell {cell} outside the {width}x{height} grid")
        if self.start in self.walls or self.goal in self.walls or self.start == self.goal:
            raise ConfigurationError("start and goal must be distinct free cells")
        self.spec = EnvSpec(width * height, 4, reward_range=(min(pit_reward, step_reward), 1.0))
        self.pos = self.start

    def index(self, cell) -> int:
        return cell[1] * self.width + cell[0]

    def observation(self, state: int) -> np.ndarray:
        return one_hot(state, self.width * self.height)

    def _move(self, cell, action):
        dx, dy = self.MOVES[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        if not (0 <= nxt[0] < self.width and 0 <= nxt[1] < self.height) or nxt in self.walls:
            return cell
        return nxt

    def _outcome(self, cell):
        if cell == self.goal:
            return 1.0, True
        if cell in self.pits:
            return self.pit_reward, True
        return self.step_reward, False

    def _reset(self, seed):
        self.pos = self.start
        return self.observation(self.index(self.pos))

    def _step(self, action):
        self.pos = self._move(self.pos, action)
        reward, done = self._outcome(self.pos)
        return StepResult(self.observation(self.index(self.pos)), reward, done)

    def cells(self):
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in self.walls]

    def decision_states(self) -> list[int]:
        return [self.index(c) for c in self.cells() if c != self.goal and c not in self.pits]

    def to_tabular(self, gamma: float) -> TabularMDP:
        n = self.width * self.height
        P = np.zeros((n, 4, n))
        R = np.zeros((n, 4))
        terminal = np.zeros(n, dtype=bool)
        for y in range(self.height):
            for x in range(self.width):
                s = self.index((x, y))
                cell = (x, y)
                if cell in self.walls or cell == self.goal or cell in self.pits:
                    terminal[s] = True
                    P[s, :, s] = 1.0
                    continue
                for a in range(4):
                    nxt = self._move(cell, a)
                    P[s, a, self.index(nxt)] = 1.0
                    R[s, a] = self._outcome(nxt)[0]
        return TabularMDP(P, R, gamma, terminal)


class Catch(Env):
    """A ball falls one row per step down a ``rows x cols`` grid.

    The paddle sits on the bottom row and moves left, stays or moves right
    (actions 0, 1, 2). When the ball reaches the bottom row the episode ends
    with +1 if the paddle is under it and -1 otherwise. The observation is
    the flattened grid with ones at the ball and paddle cells.
    """

    def __init__(self, rows: int = 10, cols: int = 5):
        super().__init__()
        if rows < 2 or cols < 1:
            raise ConfigurationError("Catch needs at least 2 rows and 1 column")
        self.rows, self.cols = rows, cols
        self.spec = EnvSpec(rows * cols, 3, reward_range=(-1.0, 1.0))
        self._rng = np.random.default_rng(0)
        self.ball = (0, 0)
        self.paddle = cols // 2

    def _obs(self):
        grid = np.zeros((self.rows, self.cols))
        grid[self.ball] = 1.0
        grid[self.rows - 1, self.paddle] = 1.0
        return grid.ravel()

    def _reset(self, seed):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.ball = (0, int(self._rng.integers(self.cols)))
        self.paddle = self.cols // 2
        return self._obs()

    def _step(self, action):
        self.paddle = min(max(self.paddle + action - 1, 0), self.cols - 1)
        self.ball = (self.ball[0] + 1, self.ball[1])
        if self.ball[0] == self.rows - 1:
            reward = 1.0 if self.paddle == self.ball[1] else -1.0
            return StepResult(self._obs(), reward, True)
        return StepResult(self._obs(), 0.0, False)


class RandomMDP(Env):
    """Dense random MDP: Dirichlet(1) transition rows and N(0, 1) rewards.

    The kernel and rewards depend only on ``mdp_seed``; the start state and
    sampled transitions come from the generator seeded at ``reset``. There is
    no terminal state, so pair it with a time limit.
    """

    def __init__(self, n_states: int = 5, n_actions: int = 2, mdp_seed: int = 0):
        super().__init__()
        if n_states < 1 or n_actions < 1:
            raise ConfigurationError("RandomMDP needs positive sizes")
        gen = np.random.default_rng(mdp_seed)
        self.P = gen.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        self.P /= self.P.sum(axis=2, keepdims=True)
        self.R = gen.normal(size=(n_states, n_actions))
        self.spec = EnvSpec(n_states, n_actions)
        self._rng = np.random.default_rng(0)
        self.state = 0

    def observation(self, state: int) -> np.ndarray:
        return one_hot(state, self.spec.observation_dim)

    def _reset(self, seed):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = int(self._rng.integers(self.spec.observation_dim))
        return self.observation(self.state)

    def _step(self, action):
        reward = float(self.R[self.state, action])
        self.state = int(self._rng.choice(self.spec.observation_dim, p=self.P[self.state, action]))
        return StepResult(self.observation(self.state), reward, False)

    def decision_states(self) -> list[int]:
        return list(range(self.spec.observation_dim))

    def to_tabular(self, gamma: float) -> TabularMDP:
        return TabularMDP(self.P, self.R, gamma)
