"""Continuous-action Q-learning with quadratic advantages, time-varying linear
model fitting, trajectory-optimized exploration, and imagination rollouts,
verified against closed-form linear-quadratic baselines."""

__version__ = "0.1.0"

from .envs import make_env
from .naf import HyperParams, NafNetwork
from .orchestrator import TrainSettings, train

__all__ = ["HyperParams", "NafNetwork", "TrainSettings", "make_env", "train", "__version__"]
