"""Adversarial two-player RL lab.

Native physics environments with a force-bounded adversary channel,
trust-region policy optimization built on an auditable gradient engine,
exact tabular zero-sum game solvers for verification, and a robustness
evaluation harness.  A FastAPI service (``rarlab.service``) wraps the
library; the ``rarlab`` CLI is a thin client over it.
"""

__version__ = "0.1.0"

from .env_core import (EnvSpec, SingleAgentView, Trajectory, TwoPlayerStep,
                       discounted_return, split)
from .envs import EnvPhysicsParams

__all__ = [
    "EnvSpec", "SingleAgentView", "Trajectory", "TwoPlayerStep",
    "discounted_return", "split", "EnvPhysicsParams", "__version__",
]
