"""Point mass sliding on ground with Coulomb and viscous friction.

State is ``[x, v]``.  Both players push horizontally; the reward is the
post-step velocity minus a quadratic control cost on the protagonist's
executed force (reward shaping is ours, not a published design):

    r = v' - 0.01 * a1^2

Friction is Coulomb plus viscous, both scaled by ``friction_coeff`` so a
zero coefficient gives exactly frictionless dynamics (v grows as F*t/m
under constant force).  At rest the block stays stuck until the total
applied force exceeds the static threshold ``mu * m * g``; while moving,
a step that would cross zero velocity under a sub-threshold force sticks
instead of reversing.  This dead zone is what makes the task non-trivial:
a do-nothing policy is a local optimum.
"""

from __future__ import annotations

import numpy as np

from ..env_core import EnvSpec, clamp_action
from . import BatchPhysicsEnv, EnvPhysicsParams, _symmetric_bounds

VISCOUS_SCALE = 4.0      # N s/m at friction_coeff = 1
CONTROL_COST = 0.01
INIT_BOX = 0.05          # initial position draw; initial velocity is zero
HORIZON = 500
DISCOUNT = 0.995


class FrictionSliderEnv(BatchPhysicsEnv):

    def __init__(self, params: EnvPhysicsParams):
        self.params = params
        self.spec = EnvSpec(
            obs_dim=2,
            act1_dim=1,
            act2_dim=1,
            act1_bounds=_symmetric_bounds(1, params.protagonist_force_cap),
            act2_bounds=_symmetric_bounds(1, params.adversary_force_cap),
            horizon=HORIZON,
            discount=DISCOUNT,
        )

    def init_state_batch(self, rngs) -> np.ndarray:
        return np.stack(
            [np.array([rng.uniform(-INIT_BOX, INIT_BOX), 0.0]) for rng in rngs]
        )

    def physics_step(self, states, force1, force2) -> np.ndarray:
        m = self.params.mass
        dt = self.params.dt
        mu = self.params.friction_coeff
        f_coulomb = mu * m * self.params.gravity
        b_viscous = mu * VISCOUS_SCALE

        x, v = states[:, 0], states[:, 1]
        F = force1[:, 0] + force2[:, 0]

        at_rest = v == 0.0
        breaks_static = np.abs(F) > f_coulomb
        drag_sign = np.where(at_rest, np.sign(F), np.sign(v))
        accel = (F - f_coulomb * drag_sign - b_viscous * v) / m
        v_new = v + dt * accel
        # stuck at rest, or a sub-threshold force dragging v through zero
        sticks = (at_rest & ~breaks_static) | (
            ~at_rest & (np.sign(v_new) != np.sign(v)) & (np.abs(F) <= f_coulomb)
        )
        v_new = np.where(sticks, 0.0, v_new)
        return np.stack([x + dt * v_new, v_new], axis=1)

    def step_batch(self, states, actions1, actions2):
        a1 = clamp_action(actions1, self.spec.act1_bounds)
        a2 = clamp_action(actions2, self.spec.act2_bounds)
        next_states = self.physics_step(states, a1, a2)
        rewards = next_states[:, 1] - CONTROL_COST * a1[:, 0] ** 2
        terminals = np.zeros(states.shape[0], dtype=bool)
        return next_states, rewards, terminals


def make_friction_slider(params: EnvPhysicsParams | None = None) -> FrictionSliderEnv:
    return FrictionSliderEnv(params or EnvPhysicsParams.slider_defaults())
