from .observations import build_obs_accel, build_obs_acc
from .rewards import RewardCoefficients, reward_accel, reward_acc
from .policy import Policy, CompositeAccPolicy, init_policy, save_policy, load_policy
from .ppo import TrainConfig, RolloutBatch, ppo_update, train

__all__ = [
    "build_obs_accel", "build_obs_acc",
    "RewardCoefficients", "reward_accel", "reward_acc",
    "Policy", "CompositeAccPolicy", "init_policy", "save_policy",
    "load_policy", "TrainConfig", "RolloutBatch", "ppo_update", "train",
]
