"""Battery-threshold baselines and the network-backed policy wrapper."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import Action
from .mlp import MlpParams, sample_action


@dataclass(frozen=True)
class ThresholdPolicy:
    """Charge when the battery fraction is strictly below ``threshold``.

    ``threshold == 1`` is the degenerate always-charge policy, including at a
    full battery.
    """
    threshold: float

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")

    def act(self, obs) -> Action:
        if obs[0] < self.threshold or self.threshold >= 1.0:
            return Action.CHARGE
        return Action.ACCEPT_RIDE

    @property
    def label(self) -> str:
        return f"heuristic:{self.threshold:g}"


def threshold_act(policy: ThresholdPolicy, obs) -> Action:
    return policy.act(obs)


class NetworkPolicy:
    """Acts with the policy network: argmax when ``deterministic``, else sampled."""

    def __init__(self, params: MlpParams, deterministic: bool = True,
                 rng: np.random.Generator | None = None, label: str = "network"):
        self.params = params
        self.deterministic = deterministic
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.label = label

    def act(self, obs) -> Action:
        logits = self.params.policy(np.asarray(obs, dtype=float))
        if self.deterministic:
            return Action(int(np.argmax(logits)))
        return Action(sample_action(logits, self.rng)[0])
