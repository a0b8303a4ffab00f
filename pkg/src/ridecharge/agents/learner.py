"""Batch on-policy learner with a KL-gated surrogate update.

Each iteration collects at least ``batch_size`` steps from ``workers`` env
instances stepped in lockstep, computes discounted returns and normalized
advantages, takes up to ``policy_epochs`` full-batch ascent steps on the
importance-weighted surrogate, and refits the value network.

A step that pushes the mean KL(old || new) over the batch past ``kl_limit`` is
halved until it fits (at most ``max_backtracks`` times) and ends the update;
if no fraction of it fits, it is reverted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mlp import MlpParams, Mlp, NonFinite, log_softmax, sample_action

log = logging.getLogger(__name__)


@dataclass
class LearnerConfig:
    discount: float = 0.8
    batch_size: int = 4096
    kl_limit: float = 0.01
    policy_epochs: int = 10
    policy_lr: float = 1.0
    policy_optimizer: str = "sgd"  # or "adam"
    max_backtracks: int = 10
    value_lr: float = 1e-3
    value_epochs: int = 5
    value_minibatch: int = 256
    episodes: int = 2500
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.kl_limit > 0:
            raise ValueError("kl_limit must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.policy_optimizer not in ("sgd", "adam"):
            raise ValueError("policy_optimizer must be 'sgd' or 'adam'")


def discounted_returns(rewards, dones, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """G_t = r_t + gamma * G_{t+1}, restarting after every step flagged done.

    ``bootstrap`` stands in for the value after the last step when that step
    did not end an episode.
    """
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    g = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        if dones[t]:
            g = 0.0
        g = rewards[t] + gamma * g
        out[t] = g
    return out


def advantages(returns, values, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(returns, dtype=float) - np.asarray(values, dtype=float)
    return (adv - adv.mean()) / (adv.std() + eps)


def categorical_kl(logp_old: np.ndarray, logp_new: np.ndarray) -> float:
    """Mean over rows of KL(old || new) for log-probability rows."""
    return float(np.mean(np.sum(np.exp(logp_old) * (logp_old - logp_new), axis=-1)))


@dataclass
class Trajectory:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)


class Sgd:
    def __init__(self, params: list, lr: float):
        self.lr = lr

    def direction(self, grads: list) -> list:
        return [-self.lr * g for g in grads]


class Adam:
    def __init__(self, params: list, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def direction(self, grads: list) -> list:
        """Advance the moments with ``grads`` and return the descent step."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        steps = []
        for i, g in enumerate(grads):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1 ** self.t)
            vhat = self.v[i] / (1 - b2 ** self.t)
            steps.append(-self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return steps


def surrogate_grad(net: Mlp, obs, actions, logp_old, adv):
    """Surrogate mean(ratio * A) and its gradient w.r.t. the policy parameters."""
    logits, acts = net.forward(obs)
    logp = log_softmax(logits)
    n = len(actions)
    idx = np.arange(n)
    ratio = np.exp(logp[idx, actions] - logp_old)
    surr = float(np.mean(ratio * adv))
    onehot = np.zeros_like(logits)
    onehot[idx, actions] = 1.0
    dlogits = (adv * ratio / n)[:, None] * (onehot - np.exp(logp))
    return surr, net.backward(acts, dlogits), logp


def value_loss_grad(net: Mlp, obs, targets):
    """Mean squared error of the value net and its gradient."""
    out, acts = net.forward(obs)
    err = out[:, 0] - targets
    loss = float(np.mean(err ** 2))
    grads = net.backward(acts, (2.0 * err / len(targets))[:, None])
    return loss, grads


def _apply(params: list, steps: list, scale: float = 1.0) -> None:
    for p, s in zip(params, steps):
        p += scale * s


class PolicyLearner:
    """Owns the networks and optimizer state between updates."""

    def __init__(self, params: MlpParams, config: LearnerConfig):
        self.params = params
        self.config = config
        opt = Adam if config.policy_optimizer == "adam" else Sgd
        self.policy_opt = opt(params.policy.params(), config.policy_lr)
        self.value_opt = Adam(params.value.params(), config.value_lr)
        self._value_rng = np.random.default_rng(config.seed + 7919)

    def policy_update(self, batch: Trajectory) -> dict:
        """KL-gated surrogate ascent on ``batch``; returns diagnostics.

        On a non-finite gradient the policy is restored and NonFinite raised.
        """
        cfg = self.config
        net = self.params.policy
        obs, actions, adv = batch.obs, batch.actions, batch.advantages
        backup = net.copy()
        logp_ref = log_softmax(net(obs))
        surr0 = float(np.mean(np.exp(logp_ref[np.arange(len(actions)), actions] - batch.logp) * adv))
        kl = 0.0
        epochs = backtracks = 0
        stopped = False
        try:
            for _ in range(cfg.policy_epochs):
                before = net.copy()
                _, grads, _ = surrogate_grad(net, obs, actions, batch.logp, adv)
                steps = self.policy_opt.direction([-g for g in grads])
                params = net.params()
                _apply(params, steps)
                kl_new = categorical_kl(logp_ref, log_softmax(net(obs)))
                scale = 1.0
                while kl_new > cfg.kl_limit and backtracks < cfg.max_backtracks:
                    stopped = True
                    backtracks += 1
                    scale *= 0.5
                    _restore(net, before)
                    _apply(params, steps, scale)
                    kl_new = categorical_kl(logp_ref, log_softmax(net(obs)))
                if kl_new > cfg.kl_limit:
                    _restore(net, before)
                    break
                kl = kl_new
                epochs += 1
                if stopped:
                    break
        except NonFinite:
            _restore(net, backup)
            raise
        surr = float(np.mean(np.exp(log_softmax(net(obs))[np.arange(len(actions)), actions]
                                    - batch.logp) * adv))
        return {"kl": kl, "surrogate_gain": surr - surr0, "epochs": epochs,
                "backtracks": backtracks, "kl_stopped": stopped}

    def value_update(self, batch: Trajectory) -> float:
        cfg = self.config
        net = self.params.value
        n = len(batch)
        mb = min(cfg.value_minibatch, n)
        loss = 0.0
        for _ in range(cfg.value_epochs):
            order = self._value_rng.permutation(n)
            for start in range(0, n, mb):
                idx = order[start:start + mb]
                loss, grads = value_loss_grad(net, batch.obs[idx], batch.returns[idx])
                _apply(net.params(), self.value_opt.direction(grads))
        return loss


def _restore(net: Mlp, src: Mlp) -> None:
    for p, q in zip(net.params(), src.params()):
        p[...] = q


def policy_update(learner: PolicyLearner, batch: Trajectory) -> tuple[MlpParams, dict]:
    diag = learner.policy_update(batch)
    diag["value_loss"] = learner.value_update(batch)
    return learner.params, diag


@dataclass
class EpisodeRecord:
    episode: int
    total_reward: float
    steps: int
    charges: int
    worker: int


@dataclass
class TrainResult:
    params: MlpParams
    curve: list = field(default_factory=list)  # EpisodeRecord per finished episode
    diagnostics: list = field(default_factory=list)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.total_reward for r in self.curve])


def train(env_factory, config: LearnerConfig, params: MlpParams | None = None,
          callback=None) -> TrainResult:
    """Train until ``config.episodes`` episodes have finished.

    ``env_factory()`` must return a fresh environment with ``reset(seed)`` and
    ``step(action)``. Seeding derives from ``config.seed`` and the worker
    count, so equal inputs give equal curves.
    """
    ss = np.random.SeedSequence(config.seed)
    init_ss, *worker_ss = ss.spawn(1 + config.workers)
    if params is None:
        params = MlpParams.init(np.random.default_rng(init_ss))
    result = TrainResult(params)
    if config.episodes <= 0:
        return result
    learner = PolicyLearner(params, config)

    workers = []
    for w, wss in enumerate(worker_ss):
        seed_rng, act_rng = (np.random.default_rng(s) for s in wss.spawn(2))
        env = env_factory()
        obs = env.reset(int(seed_rng.integers(2**31)))
        workers.append({"env": env, "obs": obs, "seeds": seed_rng, "rng": act_rng,
                        "ep_reward": 0.0, "ep_steps": 0, "ep_charges": 0})

    finished = 0
    rounds = -(-config.batch_size // config.workers)
    while finished < config.episodes:
        buf = [{"obs": [], "act": [], "rew": [], "logp": [], "done": []} for _ in workers]
        for _ in range(rounds):
            X = np.array([wk["obs"] for wk in workers], dtype=float)
            logits = learner.params.policy(X)
            for w, wk in enumerate(workers):
                a, lp = sample_action(logits[w], wk["rng"])
                res = wk["env"].step(a)
                b = buf[w]
                b["obs"].append(wk["obs"])
                b["act"].append(a)
                b["rew"].append(res.reward)
                b["logp"].append(lp)
                b["done"].append(res.done)
                wk["ep_reward"] += res.reward
                wk["ep_steps"] += 1
                wk["ep_charges"] += int(a == 0)
                if res.done:
                    result.curve.append(EpisodeRecord(len(result.curve), wk["ep_reward"],
                                                      wk["ep_steps"], wk["ep_charges"], w))
                    finished += 1
                    wk.update(ep_reward=0.0, ep_steps=0, ep_charges=0)
                    wk["obs"] = wk["env"].reset(int(wk["seeds"].integers(2**31)))
                else:
                    wk["obs"] = res.observation
        batch = _assemble(buf, workers, learner.params.value, config.discount)
        _, diag = policy_update(learner, batch)
        diag.update(finished=finished, steps=len(batch))
        result.diagnostics.append(diag)
        log.info("episodes=%d kl=%.4g gain=%.4g value_loss=%.4g", finished, diag["kl"],
                 diag["surrogate_gain"], diag["value_loss"])
        if callback is not None:
            callback(result, diag)
    del result.curve[config.episodes:]
    return result


def _assemble(buf, workers, value_net: Mlp, gamma: float) -> Trajectory:
    parts = []
    for b, wk in zip(buf, workers):
        obs = np.array(b["obs"], dtype=float)
        dones = np.array(b["done"], dtype=bool)
        values = value_net(obs)[:, 0]
        boot = 0.0 if dones[-1] else float(value_net(np.asarray(wk["obs"], dtype=float))[0])
        rets = discounted_returns(b["rew"], dones, gamma, boot)
        parts.append((obs, np.array(b["act"]), np.array(b["rew"], dtype=float),
                      np.array(b["logp"]), values, dones, rets))
    cols = [np.concatenate(c) for c in zip(*parts)]
    traj = Trajectory(*cols[:6], returns=cols[6])
    traj.advantages = advantages(traj.returns, traj.values)
    return traj
