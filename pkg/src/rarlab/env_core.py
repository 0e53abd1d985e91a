"""Two-player zero-sum game interfaces and trajectory containers.

All environments in this package share the same contract: two players
observe the same state, act simultaneously, and receive rewards that sum
to zero at every step.  Trajectories are stored as dense arrays (states,
actions, protagonist rewards) rather than lists of step objects; the
per-step record view is derived on demand.

Determinism contract: an environment is a deterministic function of its
constructor parameters, the reset seed, and the action sequence.  All
sampling happens in the policies and in the initial-state draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class EnvError(Exception):
    """Raised on protocol misuse, e.g. stepping a finished episode."""


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a two-player environment.

    Action bounds are per-coordinate ``[lo, hi]`` arrays of shape
    ``(act_dim, 2)``; actions outside them are clamped, never rejected.
    """

    obs_dim: int
    act1_dim: int
    act2_dim: int
    act1_bounds: np.ndarray
    act2_bounds: np.ndarray
    horizon: int
    discount: float

    def __post_init__(self):
        for name, bounds, dim in (
            ("act1_bounds", self.act1_bounds, self.act1_dim),
            ("act2_bounds", self.act2_bounds, self.act2_dim),
        ):
            b = np.asarray(bounds, dtype=np.float64)
            if b.shape != (dim, 2):
                raise ValueError(f"{name} must have shape ({dim}, 2), got {b.shape}")
            if not np.all(np.isfinite(b)):
                raise ValueError(f"{name} must be finite")
            if np.any(b[:, 0] > b[:, 1]):
                raise ValueError(f"{name} must satisfy lo <= hi")
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


def clamp_action(action: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Clamp an action (or batch of actions) coordinate-wise into bounds."""
    return np.clip(action, bounds[:, 0], bounds[:, 1])


@dataclass(frozen=True)
class TwoPlayerStep:
    """One transition of the zero-sum game: both actions, both rewards."""

    state: np.ndarray
    action1: np.ndarray
    action2: np.ndarray
    reward1: float
    reward2: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Trajectory:
    """A rollout of at most ``horizon`` steps.

    ``states`` has one more row than the step count; row ``t`` is the state
    seen at step ``t`` and the last row is the final next-state.  Adversary
    rewards are not stored: they are the exact negation of ``rewards1``.
    """

    states: np.ndarray      # (T+1, obs_dim)
    actions1: np.ndarray    # (T, act1_dim)
    actions2: np.ndarray    # (T, act2_dim)
    rewards1: np.ndarray    # (T,)
    terminated: bool        # True if the episode ended before the horizon
    discount: float
    horizon: int

    def __post_init__(self):
        if len(self) == 0:
            raise ValueError("empty trajectory")
        if len(self) > self.horizon:
            raise ValueError("trajectory longer than horizon")

    def __len__(self) -> int:
        return self.rewards1.shape[0]

    @property
    def rewards2(self) -> np.ndarray:
        return -self.rewards1

    def episode_return(self, player: int = 1) -> float:
        r = float(np.sum(self.rewards1))
        return r if player == 1 else -r

    def steps(self) -> Iterator[TwoPlayerStep]:
        last = len(self) - 1
        for t in range(len(self)):
            r1 = float(self.rewards1[t])
            yield TwoPlayerStep(
                state=self.states[t],
                action1=self.actions1[t],
                action2=self.actions2[t],
                reward1=r1,
                reward2=-r1,
                next_state=self.states[t + 1],
                terminal=self.terminated and t == last,
            )


@dataclass
class SingleAgentView:
    """A trajectory reduced to one player's (state, action, reward) stream.

    ``bootstrap_state`` is the final next-state, kept so value targets can
    bootstrap through horizon truncation; ``terminated`` distinguishes a
    true terminal state from a horizon cut.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    bootstrap_state: np.ndarray
    terminated: bool
    discount: float
    horizon: int

    def __len__(self) -> int:
        return self.rewards.shape[0]


def split(trajectory: Trajectory, player: int) -> SingleAgentView:
    """Project a two-player trajectory onto one player's view."""
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    T = len(trajectory)
    if T == 0:
        raise ValueError("cannot split an empty trajectory")
    actions = trajectory.actions1 if player == 1 else trajectory.actions2
    rewards = trajectory.rewards1 if player == 1 else trajectory.rewards2
    return SingleAgentView(
        states=trajectory.states[:T],
        actions=actions,
        rewards=rewards,
        bootstrap_state=trajectory.states[T],
        terminated=trajectory.terminated,
        discount=trajectory.discount,
        horizon=trajectory.horizon,
    )


def discounted_return(view: SingleAgentView, gamma: float) -> float:
    """Sum of gamma^t * r_t over the view."""
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    weights = gamma ** np.arange(len(view), dtype=np.float64)
    return float(np.dot(weights, view.rewards))


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------
#
# One step per line: t,state...,action1...,action2...,reward1,terminal
# with column counts fixed by the environment's EnvSpec.  A closing line
# carries only (T, final next-state) so the round trip is lossless.


def _fmt(values) -> str:
    return ",".join(repr(float(v)) for v in np.ravel(values))


def trajectory_to_text(traj: Trajectory) -> str:
    lines = []
    last = len(traj) - 1
    for t in range(len(traj)):
        terminal = 1 if (traj.terminated and t == last) else 0
        lines.append(
            f"{t},{_fmt(traj.states[t])},{_fmt(traj.actions1[t])},"
            f"{_fmt(traj.actions2[t])},{float(traj.rewards1[t])!r},{terminal}"
        )
    lines.append(f"{len(traj)},{_fmt(traj.states[len(traj)])}")
    return "\n".join(lines) + "\n"


def trajectory_from_text(text: str, spec: EnvSpec) -> Trajectory:
    rows = [line for line in text.splitlines() if line.strip()]
    if len(rows) < 2:
        raise ValueError("trajectory text must contain at least one step")
    n_step_cols = 1 + spec.obs_dim + spec.act1_dim + spec.act2_dim + 2
    T = len(rows) - 1
    states = np.empty((T + 1, spec.obs_dim))
    actions1 = np.empty((T, spec.act1_dim))
    actions2 = np.empty((T, spec.act2_dim))
    rewards1 = np.empty(T)
    terminated = False
    for t, row in enumerate(rows[:-1]):
        cols = row.split(",")
        if len(cols) != n_step_cols:
            raise ValueError(f"step line {t}: expected {n_step_cols} columns, got {len(cols)}")
        if int(cols[0]) != t:
            raise ValueError(f"step line {t}: bad step index {cols[0]}")
        k = 1
        states[t] = [float(c) for c in cols[k:k + spec.obs_dim]]
        k += spec.obs_dim
        actions1[t] = [float(c) for c in cols[k:k + spec.act1_dim]]
        k += spec.act1_dim
        actions2[t] = [float(c) for c in cols[k:k + spec.act2_dim]]
        k += spec.act2_dim
        rewards1[t] = float(cols[k])
        terminated = bool(int(cols[k + 1]))
    closing = rows[-1].split(",")
    if len(closing) != 1 + spec.obs_dim or int(closing[0]) != T:
        raise ValueError("bad closing state line")
    states[T] = [float(c) for c in closing[1:]]
    return Trajectory(
        states=states,
        actions1=actions1,
        actions2=actions2,
        rewards1=rewards1,
        terminated=terminated,
        discount=spec.discount,
        horizon=spec.horizon,
    )
