"""Generated tabular zero-sum Markov games for oracle verification.

A game is dense tables ``reward[s, a1, a2]`` and ``transition[s, a1, a2]``
(a probability vector over next states).  Episodes start at a designated
state, never terminate early, and run to the configured horizon.  States
and actions are integer indices throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env_core import EnvError, EnvSpec


@dataclass
class TabularGame:
    reward: np.ndarray       # (S, A1, A2)
    transition: np.ndarray   # (S, A1, A2, S)
    start_state: int = 0
    discount: float = 0.95

    def __post_init__(self):
        S, A1, A2 = self.reward.shape
        if self.transition.shape != (S, A1, A2, S):
            raise ValueError("transition table shape mismatch")
        if np.any(self.transition < 0):
            raise ValueError("transition probabilities must be nonnegative")
        row_sums = self.transition.sum(axis=3)
        if np.max(np.abs(row_sums - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if not (0 <= self.start_state < S):
            raise ValueError("start_state out of range")
        if not (0.0 < self.discount < 1.0):
            raise ValueError("tabular games require discount in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions1(self) -> int:
        return self.reward.shape[1]

    @property
    def n_actions2(self) -> int:
        return self.reward.shape[2]


def make_tabular_game(seed: int, n_states: int, n_actions1: int, n_actions2: int,
                      support: int = 3, discount: float = 0.95) -> TabularGame:
    """Pseudo-random game: rewards uniform in [-1, 1], sparse kernels.

    Each (s, a1, a2) transition row puts normalized random weight on
    ``min(support, n_states)`` distinct successor states.
    """
    if min(n_states, n_actions1, n_actions2) < 1:
        raise ValueError("game dimensions must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions1, n_actions2))
    transition = np.zeros((n_states, n_actions1, n_actions2, n_states))
    k = min(support, n_states)
    for s in range(n_states):
        for a1 in range(n_actions1):
            for a2 in range(n_actions2):
                successors = rng.choice(n_states, size=k, replace=False)
                weights = rng.uniform(0.1, 1.0, size=k)
                transition[s, a1, a2, successors] = weights / weights.sum()
    return TabularGame(reward=reward, transition=transition, discount=discount)


class TabularGameEnv:
    """Stateful episode interface over a TabularGame.

    Rollouts are serial (one trajectory at a time); there is no vectorized
    fast path because the state spaces are tiny.
    """

    def __init__(self, game: TabularGame, horizon: int = 50):
        self.game = game
        bounds1 = np.array([[0.0, game.n_actions1 - 1.0]])
        bounds2 = np.array([[0.0, game.n_actions2 - 1.0]])
        self.spec = EnvSpec(
            obs_dim=1,
            act1_dim=1,
            act2_dim=1,
            act1_bounds=bounds1,
            act2_bounds=bounds2,
            horizon=horizon,
            discount=game.discount,
        )

    def next_state_from_uniform(self, state: int, a1: int, a2: int, u: float) -> int:
        cdf = np.cumsum(self.game.transition[state, a1, a2])
        return int(min(np.searchsorted(cdf, u, side="right"), self.game.n_states - 1))

    def reset(self, seed: int) -> int:
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self._state = self.game.start_state
        self._done = False
        return self._state

    def step(self, action1: int, action2: int):
        if not hasattr(self, "_state"):
            raise EnvError("step() before reset()")
        if self._done:
            raise EnvError("step() after terminal state; call reset()")
        a1 = int(np.clip(action1, 0, self.game.n_actions1 - 1))
        a2 = int(np.clip(action2, 0, self.game.n_actions2 - 1))
        r1 = float(self.game.reward[self._state, a1, a2])
        self._state = self.next_state_from_uniform(self._state, a1, a2, self._rng.random())
        return self._state, r1, -r1, False
