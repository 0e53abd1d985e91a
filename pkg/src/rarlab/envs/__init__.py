"""Native deterministic environments with an additive adversary channel.

Three environments share the two-player contract from ``env_core``:

* inverted pendulum on a rail cart; the adversary pushes the pole's
  center of mass with a planar force,
* a point-mass slider with Coulomb-plus-viscous ground friction; the
  adversary applies an opposing horizontal force,
* generated tabular zero-sum Markov games for oracle verification.

Setting ``adversary_force_cap`` to zero makes every environment exactly
single-player: adversary actions are clamped to the zero interval.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..env_core import EnvError, EnvSpec, clamp_action


@dataclass(frozen=True)
class EnvPhysicsParams:
    """The physics knobs varied between training and test.

    ``mass`` is the pole mass for the pendulum and the body mass for the
    slider; ``mass_cart`` and ``friction_coeff`` are only read by their
    respective environments.
    """

    mass: float
    mass_cart: float = 1.0
    friction_coeff: float = 0.08
    gravity: float = 9.81
    dt: float = 0.02
    adversary_force_cap: float = 2.0
    protagonist_force_cap: float = 10.0

    def __post_init__(self):
        if self.mass <= 0 or self.mass_cart <= 0:
            raise ValueError("masses must be positive")
        if self.friction_coeff < 0:
            raise ValueError("friction_coeff must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.adversary_force_cap < 0 or self.protagonist_force_cap < 0:
            raise ValueError("force caps must be nonnegative")
        if self.gravity <= 0:
            raise ValueError("gravity must be positive")

    @classmethod
    def pendulum_defaults(cls, **overrides) -> "EnvPhysicsParams":
        base = cls(mass=4.89, mass_cart=1.0, dt=0.02,
                   adversary_force_cap=2.0, protagonist_force_cap=10.0)
        return replace(base, **overrides) if overrides else base

    @classmethod
    def slider_defaults(cls, **overrides) -> "EnvPhysicsParams":
        base = cls(mass=3.53, friction_coeff=0.08, dt=0.05,
                   adversary_force_cap=1.0, protagonist_force_cap=5.0)
        return replace(base, **overrides) if overrides else base


def _symmetric_bounds(dim: int, cap: float) -> np.ndarray:
    return np.stack([np.full(dim, -cap), np.full(dim, cap)], axis=1)


class BatchPhysicsEnv:
    """Base for vectorized continuous environments.

    Subclasses implement ``init_state_batch`` and ``step_batch`` as pure
    functions over ``(B, obs_dim)`` state arrays; the stateful single-
    episode interface (``reset`` / ``step``) is derived from them and
    guards against stepping past a terminal state.
    """

    spec: EnvSpec

    def init_state_batch(self, rngs) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, states, actions1, actions2):
        raise NotImplementedError

    # -- stateful single-episode view --------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self._state = self.init_state_batch([rng])[0]
        self._done = False
        self._t = 0
        return self._state.copy()

    def step(self, action1, action2):
        if not hasattr(self, "_state"):
            raise EnvError("step() before reset()")
        if self._done:
            raise EnvError("step() after terminal state; call reset()")
        a1 = np.atleast_1d(np.asarray(action1, dtype=np.float64))
        a2 = np.atleast_1d(np.asarray(action2, dtype=np.float64))
        next_states, rewards, terminals = self.step_batch(
            self._state[None, :], a1[None, :], a2[None, :]
        )
        self._state = next_states[0]
        self._done = bool(terminals[0])
        self._t += 1
        r1 = float(rewards[0])
        return self._state.copy(), r1, -r1, self._done
