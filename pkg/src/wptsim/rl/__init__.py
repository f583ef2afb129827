"""Reinforcement-learning alternative to the convex benchmark.

A trust-region policy-gradient agent (Gaussian policy, natural-gradient
step with KL line search, GAE advantages, Adam-fitted value baseline)
learns the joint beacon/sensor allocation from battery and reward
feedback only.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .env import BeaconEnv, EpisodeTrace, softmax_allocation, squash_ratio
from .nets import Adam, Mlp
from .policy import GaussianPolicy
from .trpo import (
    RunningNorm,
    TrainResult,
    conjugate_gradient,
    discount_cumsum,
    evaluate_policy,
    gae_advantages,
    rollout,
    train,
)

__all__ = [
    "Adam",
    "BeaconEnv",
    "EpisodeTrace",
    "GaussianPolicy",
    "Mlp",
    "RunningNorm",
    "TrainResult",
    "conjugate_gradient",
    "discount_cumsum",
    "evaluate_policy",
    "gae_advantages",
    "load_checkpoint",
    "rollout",
    "save_checkpoint",
    "softmax_allocation",
    "squash_ratio",
    "train",
]
