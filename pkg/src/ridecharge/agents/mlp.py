"""Dense tanh networks with hand-written backpropagation.

Weights are stored as ``(fan_in, fan_out)`` arrays so a batch ``X`` of shape
``(n, fan_in)`` maps through ``X @ W + b``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1
POLICY_SIZES = (7, 64, 64, 2)
VALUE_SIZES = (7, 64, 64, 1)


class NonFinite(FloatingPointError):
    pass


@dataclass
class Mlp:
    weights: list  # list of (fan_in, fan_out) arrays
    biases: list

    @property
    def sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, out_scale: float = 0.01) -> "Mlp":
        """Glorot-uniform layers, output layer scaled by ``out_scale``, zero biases."""
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            if i == len(sizes) - 2:
                W *= out_scale
            weights.append(W)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes) -> "Mlp":
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    def copy(self) -> "Mlp":
        return Mlp([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def params(self) -> list:
        """Flat view order used by optimizers: W1, b1, W2, b2, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def forward(self, X: np.ndarray):
        """Returns (output, cache). Hidden layers use tanh; the last is linear."""
        X = np.asarray(X, dtype=float)
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        if not np.all(np.isfinite(h)):
            raise NonFinite("network output is not finite")
        return h, acts

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, acts: list, dout: np.ndarray) -> list:
        """Gradients of a loss w.r.t. every parameter given dLoss/dOutput.

        Returned in :meth:`params` order.
        """
        grads = [None] * (2 * len(self.weights))
        delta = np.asarray(dout, dtype=float)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i != last:
                # acts[i + 1] = tanh(z_i)
                delta = delta * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFinite("gradient is not finite")
        return grads

    def to_dict(self) -> dict:
        d = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            d[f"W{i}"] = W.tolist()
            d[f"b{i}"] = b.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict, sizes) -> "Mlp":
        n = len(sizes) - 1
        weights = [np.asarray(d[f"W{i}"], dtype=float).reshape(sizes[i - 1], sizes[i])
                   for i in range(1, n + 1)]
        biases = [np.asarray(d[f"b{i}"], dtype=float).reshape(sizes[i]) for i in range(1, n + 1)]
        return cls(weights, biases)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - np.max(logits, axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def sample_action(logits, rng: np.random.Generator) -> tuple[int, float]:
    """Draw from the categorical over ``logits``; returns (action, log_prob)."""
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise NonFinite("logits are not finite")
    logp = log_softmax(logits)
    u = rng.random()
    cdf = np.cumsum(np.exp(logp))
    a = int(np.searchsorted(cdf, u, side="right"))
    a = min(a, len(logits) - 1)
    return a, float(logp[a])


@dataclass
class MlpParams:
    """Policy and value networks together, as checkpointed."""
    policy: Mlp
    value: Mlp

    @classmethod
    def init(cls, rng: np.random.Generator, policy_sizes=POLICY_SIZES,
             value_sizes=VALUE_SIZES) -> "MlpParams":
        return cls(Mlp.init(policy_sizes, rng), Mlp.init(value_sizes, rng))

    def copy(self) -> "MlpParams":
        return MlpParams(self.policy.copy(), self.value.copy())

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "arch": {"policy": list(self.policy.sizes), "value": list(self.value.sizes),
                     "activation": "tanh"},
            "policy": self.policy.to_dict(),
            "value": self.value.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        arch = d["arch"]
        return cls(Mlp.from_dict(d["policy"], arch["policy"]),
                   Mlp.from_dict(d["value"], arch["value"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "MlpParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def mlp_forward(params: MlpParams, obs):
    """(logits, value, (policy_cache, value_cache)) for one observation or a batch."""
    x = np.asarray(obs, dtype=float)
    logits, pc = params.policy.forward(x)
    value, vc = params.value.forward(x)
    return logits, value[..., 0], (pc, vc)
