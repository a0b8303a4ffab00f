from .heuristics import NetworkPolicy, ThresholdPolicy, threshold_act
from .learner import (LearnerConfig, PolicyLearner, Trajectory, TrainResult, advantages,
                      discounted_returns, policy_update, train)
from .mlp import Mlp, MlpParams, NonFinite, mlp_forward, sample_action, softmax

__all__ = [
    "LearnerConfig", "Mlp", "MlpParams", "NetworkPolicy", "NonFinite", "PolicyLearner",
    "ThresholdPolicy", "Trajectory", "TrainResult", "advantages", "discounted_returns",
    "mlp_forward", "policy_update", "sample_action", "softmax", "threshold_act", "train",
]
